//! Extrinsic solvers: eye-in-hand (`T_C^{MS}` from mocap + checkerboard
//! poses) and point-to-plane (`T_C^L` from checkerboard planes seen by
//! both sensors).
//!
//! Inputs are TOML files:
//!
//! ```toml
//! # eye-in-hand: one [[sample]] per rig placement
//! [[sample]]
//! t_w_ms = { translation = [0.1, 0.2, 1.0], rotation_wxyz = [1.0, 0.0, 0.0, 0.0] }
//! t_cb_c = { translation = [0.0, 0.0, -2.0], rotation_wxyz = [1.0, 0.0, 0.0, 0.0] }
//! ```
//!
//! ```toml
//! # point-to-plane: initial guess plus one [[plane]] per board placement
//! initial = { translation = [0.0, -0.1, 0.0], rotation_wxyz = [1.0, 0.0, 0.0, 0.0] }
//! [[plane]]
//! normal = [0.0, 0.0, -1.0]   # camera frame, unit, facing the camera
//! d = -2.0                    # n·x = d, metres
//! points = [[0.1, 0.2, 2.0], [0.3, -0.1, 2.0], [-0.2, 0.0, 2.0]]   # LiDAR frame
//! ```

use std::path::Path;

use nalgebra::{
    DMatrix, DVector, Matrix3, Matrix4, Matrix6, Quaternion, SymmetricEigen, UnitQuaternion, Vector3, Vector4, Vector6,
};
use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{RigidTransform, FRAME_CAMERA, FRAME_LIDAR, FRAME_RIG_MARKERS, FRAME_WORLD};

/// Checkerboard frame label for the camera poses of the eye-in-hand samples.
pub const FRAME_CHECKERBOARD: &str = "Cb";

const MAX_GN_ITERATIONS: usize = 100;
const GN_STEP_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 40;
const PARALLEL_AXIS_TOL_RAD: f64 = 1.0 * std::f64::consts::PI / 180.0;
/// Relative rotations smaller than this carry no axis information.
const MIN_ROTATION_RAD: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("need at least {needed} {what}, got {got}")]
    InsufficientSamples {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("degenerate motion: all relative rotation axes are parallel within 1°")]
    DegenerateMotion,
    #[error("plane normals do not span 3D; transform is unobservable")]
    RankDeficient,
    #[error("Gauss-Newton did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandEyeSample {
    /// Mocap pose of the rig markers, `W ← MS`.
    pub t_w_ms: RigidTransform,
    /// Camera pose relative to the fixed checkerboard, `Cb ← C`.
    pub t_cb_c: RigidTransform,
}

impl HandEyeSample {
    pub fn new(t_w_ms: RigidTransform, t_cb_c: RigidTransform) -> Result<Self, CalibrationError> {
        let check = |t: &RigidTransform, p: &str, c: &str| {
            if t.parent() != p || t.child() != c {
                Err(CalibrationError::InvalidInput(format!(
                    "expected {p}<-{c} transform, found {}<-{}",
                    t.parent(),
                    t.child()
                )))
            } else {
                Ok(())
            }
        };
        check(&t_w_ms, FRAME_WORLD, FRAME_RIG_MARKERS)?;
        check(&t_cb_c, FRAME_CHECKERBOARD, FRAME_CAMERA)?;
        Ok(Self { t_w_ms, t_cb_c })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandEyeSolution {
    /// `C ← MS`.
    pub t_c_ms: RigidTransform,
    /// Mean rotation residual over all motion pairs, radians.
    pub mean_rotation_residual: f64,
    /// Mean translation residual over all motion pairs, metres.
    pub mean_translation_residual: f64,
}

fn quat_vec(q: &UnitQuaternion<f64>) -> Vector4<f64> {
    let q = q.quaternion();
    let v = Vector4::new(q.w, q.i, q.j, q.k);
    if v[0] < 0.0 {
        -v
    } else {
        v
    }
}

/// Left-multiplication matrix: `q ⊗ p = L(q)·p`, `(w, x, y, z)` order.
fn quat_left(q: &Vector4<f64>) -> Matrix4<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix4::new(w, -x, -y, -z, x, w, -z, y, y, z, w, -x, z, -y, x, w)
}

/// Right-multiplication matrix: `p ⊗ q = R(q)·p`.
fn quat_right(q: &Vector4<f64>) -> Matrix4<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix4::new(w, -x, -y, -z, x, w, z, -y, y, -z, w, x, z, y, -x, w)
}

struct MotionPair {
    a: RigidTransform,
    b: RigidTransform,
}

/// Relative motions `A = M_j⁻¹ M_i` (marker body) and `B = C_j⁻¹ C_i`
/// (camera), which satisfy `A·Y = Y·B` with `Y = T_MS^C`.
fn motion_pairs(samples: &[HandEyeSample]) -> Vec<MotionPair> {
    let mut out = Vec::new();
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let a = samples[j]
                .t_w_ms
                .inverse()
                .compose(&samples[i].t_w_ms)
                .expect("frames checked");
            let b = samples[j]
                .t_cb_c
                .inverse()
                .compose(&samples[i].t_cb_c)
                .expect("frames checked");
            out.push(MotionPair { a, b });
        }
    }
    out
}

fn check_axes(pairs: &[MotionPair]) -> Result<(), CalibrationError> {
    let axes: Vec<Vector3<f64>> = pairs
        .iter()
        .filter(|p| p.a.rotation().angle() > MIN_ROTATION_RAD)
        .filter_map(|p| p.a.rotation().axis().map(|a| a.into_inner()))
        .collect();
    let Some(first) = axes.first() else {
        return Err(CalibrationError::DegenerateMotion);
    };
    let spread = axes
        .iter()
        .map(|a| a.dot(first).abs().min(1.0).acos())
        .fold(0.0, f64::max);
    if spread <= PARALLEL_AXIS_TOL_RAD {
        return Err(CalibrationError::DegenerateMotion);
    }
    Ok(())
}

/// Solves `A·X = X·B` for `T_C^{MS}`: rotation from the null space of the
/// stacked quaternion constraints, translation by linear least squares.
pub fn solve_eye_in_hand(samples: &[HandEyeSample]) -> Result<HandEyeSolution, CalibrationError> {
    if samples.len() < 3 {
        return Err(CalibrationError::InsufficientSamples {
            what: "hand-eye samples",
            needed: 3,
            got: samples.len(),
        });
    }
    let pairs = motion_pairs(samples);
    check_axes(&pairs)?;

    // Σ Mₖᵀ Mₖ with Mₖ = L(q_A) − R(q_B); its smallest eigenvector is the
    // least-squares unit quaternion of Y.
    let mut normal = Matrix4::zeros();
    for p in &pairs {
        let m = quat_left(&quat_vec(p.a.rotation())) - quat_right(&quat_vec(p.b.rotation()));
        normal += m.transpose() * m;
    }
    let eig = SymmetricEigen::new(normal);
    let k = eig.eigenvalues.imin();
    let mut qy: Vector4<f64> = eig.eigenvectors.column(k).into_owned();
    if qy[0] < 0.0 {
        qy = -qy;
    }
    let r_y = UnitQuaternion::from_quaternion(Quaternion::new(qy[0], qy[1], qy[2], qy[3]));
    let r_y_m = *r_y.to_rotation_matrix().matrix();

    // (R_A − I)·t_Y = R_Y·t_B − t_A, stacked over all pairs
    let n = pairs.len();
    let mut lhs = DMatrix::zeros(3 * n, 3);
    let mut rhs = DVector::zeros(3 * n);
    for (k, p) in pairs.iter().enumerate() {
        let ra = p.a.rotation_matrix() - Matrix3::identity();
        lhs.fixed_view_mut::<3, 3>(3 * k, 0).copy_from(&ra);
        let r = r_y_m * p.b.translation() - p.a.translation();
        rhs.fixed_rows_mut::<3>(3 * k).copy_from(&r);
    }
    let svd = lhs.svd(true, true);
    let t_y: DVector<f64> = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| CalibrationError::InvalidInput(e.to_string()))?;
    let y = RigidTransform::from_parts(
        FRAME_RIG_MARKERS,
        FRAME_CAMERA,
        r_y,
        Vector3::new(t_y[0], t_y[1], t_y[2]),
    );

    let (mut rot_sum, mut tr_sum) = (0.0, 0.0);
    for p in &pairs {
        let ay = p.a.compose(&y).expect("frames");
        let yb = y.compose(&p.b).expect("frames");
        let (ang, dist) = ay.distance_to(&yb);
        rot_sum += ang;
        tr_sum += dist;
    }
    Ok(HandEyeSolution {
        t_c_ms: y.inverse(),
        mean_rotation_residual: rot_sum / n as f64,
        mean_translation_residual: tr_sum / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneObservation {
    /// Unit normal in the camera frame, oriented toward the camera.
    pub normal: Vector3<f64>,
    /// Plane offset: points `x` on the plane satisfy `n·x = d`; metres.
    pub d: f64,
    /// Board points in the LiDAR frame.
    pub lidar_points: Vec<Vector3<f64>>,
}

impl PlaneObservation {
    pub fn new(normal: Vector3<f64>, d: f64, lidar_points: Vec<Vector3<f64>>) -> Result<Self, CalibrationError> {
        if (normal.norm() - 1.0).abs() > 1e-9 {
            return Err(CalibrationError::InvalidInput(format!(
                "plane normal has norm {}, expected 1",
                normal.norm()
            )));
        }
        // camera at the origin lies on the side the normal points to
        if d > 0.0 {
            return Err(CalibrationError::InvalidInput(
                "plane normal must face the camera (d <= 0)".into(),
            ));
        }
        if lidar_points.len() < 3 {
            return Err(CalibrationError::InsufficientSamples {
                what: "points per plane",
                needed: 3,
                got: lidar_points.len(),
            });
        }
        if !lidar_points
            .iter()
            .flatten()
            .chain(normal.iter())
            .all(|v| v.is_finite())
            || !d.is_finite()
        {
            return Err(CalibrationError::InvalidInput("non-finite plane data".into()));
        }
        Ok(Self {
            normal,
            d,
            lidar_points,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSolution {
    /// `C ← L`.
    pub t_c_l: RigidTransform,
    /// Σ (n·(R·p + t) − d)² at the solution, m².
    pub cost: f64,
    /// Root-mean-square point-to-plane distance, metres.
    pub rms_residual: f64,
    pub iterations: usize,
}

fn plane_cost(obs: &[PlaneObservation], r: &Matrix3<f64>, t: &Vector3<f64>) -> f64 {
    obs.iter()
        .flat_map(|o| {
            o.lidar_points
                .iter()
                .map(move |p| (o.normal.dot(&(r * p + t)) - o.d).powi(2))
        })
        .sum()
}

fn normals_span_3d(obs: &[PlaneObservation]) -> bool {
    let scatter: Matrix3<f64> = obs.iter().map(|o| o.normal * o.normal.transpose()).sum();
    let ev = scatter.symmetric_eigenvalues();
    ev.min() > 1e-6 * ev.max().max(1e-300)
}

/// Minimizes Σ (n·(R·p + t) − d)² over `T_C^L` by Gauss–Newton with the
/// left perturbation `R ← exp(ω)·R`, `t ← t + ν`; a step that raises the
/// cost is halved until it does not.
pub fn solve_point_to_plane(
    observations: &[PlaneObservation],
    initial: &RigidTransform,
) -> Result<PlaneSolution, CalibrationError> {
    if observations.len() < 3 {
        return Err(CalibrationError::InsufficientSamples {
            what: "plane observations",
            needed: 3,
            got: observations.len(),
        });
    }
    if !normals_span_3d(observations) {
        return Err(CalibrationError::RankDeficient);
    }
    let mut rot = *initial.rotation();
    let mut t = *initial.translation();
    let mut r_m = *rot.to_rotation_matrix().matrix();
    let mut cost = plane_cost(observations, &r_m, &t);
    let npoints: usize = observations.iter().map(|o| o.lidar_points.len()).sum();

    let mut iterations = 0;
    loop {
        if iterations == MAX_GN_ITERATIONS {
            return Err(CalibrationError::NonConvergence(MAX_GN_ITERATIONS));
        }
        iterations += 1;
        let mut jtj = Matrix6::zeros();
        let mut jtr = Vector6::zeros();
        for o in observations {
            for p in &o.lidar_points {
                let rp = r_m * p;
                let res = o.normal.dot(&(rp + t)) - o.d;
                let jr = rp.cross(&o.normal);
                let j = Vector6::new(jr.x, jr.y, jr.z, o.normal.x, o.normal.y, o.normal.z);
                jtj += j * j.transpose();
                jtr += j * res;
            }
        }
        let Some(chol) = jtj.cholesky() else {
            return Err(CalibrationError::RankDeficient);
        };
        let step = -chol.solve(&jtr);
        if step.norm() < GN_STEP_TOL {
            break;
        }
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let s = step * scale;
            let cand_rot = UnitQuaternion::new_normalize(
                (UnitQuaternion::from_scaled_axis(Vector3::new(s[0], s[1], s[2])) * rot).into_inner(),
            );
            let cand_t = t + Vector3::new(s[3], s[4], s[5]);
            let cand_r = *cand_rot.to_rotation_matrix().matrix();
            let cand_cost = plane_cost(observations, &cand_r, &cand_t);
            if cand_cost <= cost {
                rot = cand_rot;
                t = cand_t;
                r_m = cand_r;
                cost = cand_cost;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // no descent along the GN direction: at the minimum to machine precision
            break;
        }
    }
    Ok(PlaneSolution {
        t_c_l: RigidTransform::from_parts(FRAME_CAMERA, FRAME_LIDAR, rot, t),
        cost,
        rms_residual: (cost / npoints as f64).sqrt(),
        iterations,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseEntry {
    translation: [f64; 3],
    rotation_wxyz: [f64; 4],
}

impl PoseEntry {
    fn to_transform(&self, parent: &str, child: &str) -> Result<RigidTransform, CalibrationError> {
        RigidTransform::new(parent, child, self.rotation_wxyz, self.translation)
            .map_err(|e| CalibrationError::InvalidInput(e.to_string()))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleEntry {
    t_w_ms: PoseEntry,
    t_cb_c: PoseEntry,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HandEyeFile {
    sample: Vec<SampleEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaneEntry {
    normal: [f64; 3],
    d: f64,
    points: Vec<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaneFile {
    initial: PoseEntry,
    plane: Vec<PlaneEntry>,
}

pub fn parse_hand_eye(text: &str) -> Result<Vec<HandEyeSample>, CalibrationError> {
    let file: HandEyeFile = toml::from_str(text).map_err(|e| CalibrationError::InvalidInput(e.to_string()))?;
    file.sample
        .iter()
        .map(|s| {
            HandEyeSample::new(
                s.t_w_ms.to_transform(FRAME_WORLD, FRAME_RIG_MARKERS)?,
                s.t_cb_c.to_transform(FRAME_CHECKERBOARD, FRAME_CAMERA)?,
            )
        })
        .collect()
}

pub fn parse_planes(text: &str) -> Result<(Vec<PlaneObservation>, RigidTransform), CalibrationError> {
    let file: PlaneFile = toml::from_str(text).map_err(|e| CalibrationError::InvalidInput(e.to_string()))?;
    let initial = file.initial.to_transform(FRAME_CAMERA, FRAME_LIDAR)?;
    let obs = file
        .plane
        .iter()
        .map(|p| {
            PlaneObservation::new(
                p.normal.into(),
                p.d,
                p.points.iter().map(|&q| Vector3::from(q)).collect(),
            )
        })
        .collect::<Result<_, _>>()?;
    Ok((obs, initial))
}

fn read(path: &Path) -> Result<String, CalibrationError> {
    std::fs::read_to_string(path).map_err(|e| CalibrationError::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn load_hand_eye(path: &Path) -> Result<Vec<HandEyeSample>, CalibrationError> {
    parse_hand_eye(&read(path)?)
}

pub fn load_planes(path: &Path) -> Result<(Vec<PlaneObservation>, RigidTransform), CalibrationError> {
    parse_planes(&read(path)?)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        UnitQuaternion::from_quaternion(q)
    }

    pub fn random_transform(rng: &mut impl Rng, parent: &str, child: &str, scale: f64) -> RigidTransform {
        let t = Vector3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        );
        RigidTransform::from_parts(parent, child, random_rotation(rng), t)
    }

    /// Samples consistent with `T_C^{MS} = x` for a fixed board in the world.
    pub fn hand_eye_samples(seed: u64, x: &RigidTransform, n: usize) -> Vec<HandEyeSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t_w_cb = random_transform(&mut rng, FRAME_WORLD, FRAME_CHECKERBOARD, 2.0);
        let y = x.inverse();
        (0..n)
            .map(|_| {
                let t_w_ms = random_transform(&mut rng, FRAME_WORLD, FRAME_RIG_MARKERS, 3.0);
                // Cb←C = (W←Cb)⁻¹ · W←MS · MS←C
                let t_cb_c = t_w_cb.inverse().compose(&t_w_ms).unwrap().compose(&y).unwrap();
                HandEyeSample::new(t_w_ms, t_cb_c).unwrap()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use crate::geometry::rotation_about;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn x_true() -> RigidTransform {
        RigidTransform::from_parts(
            FRAME_CAMERA,
            FRAME_RIG_MARKERS,
            rotation_about(Vector3::new(0.2, -0.7, 0.4), 1.1),
            Vector3::new(0.05, -0.12, 0.30),
        )
    }

    #[test]
    fn quaternion_product_matrices_match_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_rotation(&mut rng);
        let b = random_rotation(&mut rng);
        let prod = quat_vec(&(a * b));
        let (va, vb) = (quat_vec(&a), quat_vec(&b));
        let l = quat_left(&va) * vb;
        let r = quat_right(&vb) * va;
        let sgn = |v: Vector4<f64>| if v[0] < 0.0 { -v } else { v };
        assert!((sgn(l) - prod).norm() < 1e-12);
        assert!((sgn(r) - prod).norm() < 1e-12);
    }

    #[test]
    fn eye_in_hand_exact_recovery() {
        let x = x_true();
        let sol = solve_eye_in_hand(&hand_eye_samples(11, &x, 5)).unwrap();
        let (ang, dist) = sol.t_c_ms.distance_to(&x);
        assert!(ang < 1e-6 && dist < 1e-6, "{ang} {dist}");
        assert_eq!(
            (sol.t_c_ms.parent(), sol.t_c_ms.child()),
            (FRAME_CAMERA, FRAME_RIG_MARKERS)
        );
        assert!(sol.mean_rotation_residual < 1e-9 && sol.mean_translation_residual < 1e-9);
    }

    #[test]
    fn eye_in_hand_invariant_to_world_frame() {
        let x = x_true();
        let samples = hand_eye_samples(5, &x, 6);
        let g = RigidTransform::from_parts(
            FRAME_WORLD,
            FRAME_WORLD,
            rotation_about(Vector3::new(1.0, 1.0, 0.0), 0.8),
            Vector3::new(3.0, -2.0, 1.0),
        );
        let moved: Vec<_> = samples
            .iter()
            .map(|s| HandEyeSample::new(g.compose(&s.t_w_ms).unwrap(), s.t_cb_c.clone()).unwrap())
            .collect();
        let a = solve_eye_in_hand(&samples).unwrap();
        let b = solve_eye_in_hand(&moved).unwrap();
        let (ang, dist) = a.t_c_ms.distance_to(&b.t_c_ms);
        assert!(ang < 1e-9 && dist < 1e-9, "{ang} {dist}");
    }

    #[test]
    fn eye_in_hand_single_axis_is_degenerate() {
        let x = x_true();
        let y = x.inverse();
        let t_w_cb = RigidTransform::from_translation(FRAME_WORLD, FRAME_CHECKERBOARD, Vector3::new(0.0, 0.0, 3.0));
        let samples: Vec<_> = (0..5)
            .map(|k| {
                let t_w_ms = RigidTransform::from_parts(
                    FRAME_WORLD,
                    FRAME_RIG_MARKERS,
                    rotation_about(Vector3::z(), 0.3 * k as f64),
                    Vector3::new(k as f64, 0.5, 0.0),
                );
                let t_cb_c = t_w_cb.inverse().compose(&t_w_ms).unwrap().compose(&y).unwrap();
                HandEyeSample::new(t_w_ms, t_cb_c).unwrap()
            })
            .collect();
        assert_eq!(solve_eye_in_hand(&samples), Err(CalibrationError::DegenerateMotion));
    }

    #[test]
    fn eye_in_hand_needs_three_samples() {
        let s = hand_eye_samples(1, &x_true(), 2);
        assert!(matches!(
            solve_eye_in_hand(&s),
            Err(CalibrationError::InsufficientSamples { got: 2, .. })
        ));
    }

    #[test]
    fn eye_in_hand_noisy_within_half_degree_and_5mm() {
        let x = x_true();
        // 11 placements -> 55 motion pairs
        let clean = hand_eye_samples(21, &x, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let rot_noise = Normal::new(0.0, 0.1f64.to_radians()).unwrap();
        let tr_noise = Normal::new(0.0, 0.001).unwrap();
        let mut perturb = |t: &RigidTransform| {
            let w = Vector3::new(
                rot_noise.sample(&mut rng),
                rot_noise.sample(&mut rng),
                rot_noise.sample(&mut rng),
            );
            let d = Vector3::new(
                tr_noise.sample(&mut rng),
                tr_noise.sample(&mut rng),
                tr_noise.sample(&mut rng),
            );
            RigidTransform::from_parts(
                t.parent(),
                t.child(),
                UnitQuaternion::from_scaled_axis(w) * t.rotation(),
                t.translation() + d,
            )
        };
        let noisy: Vec<_> = clean
            .iter()
            .map(|s| HandEyeSample::new(perturb(&s.t_w_ms), perturb(&s.t_cb_c)).unwrap())
            .collect();
        let sol = solve_eye_in_hand(&noisy).unwrap();
        let (ang, dist) = sol.t_c_ms.distance_to(&x);
        assert!(
            ang < 0.5f64.to_radians() && dist < 0.005,
            "{} deg {dist} m",
            ang.to_degrees()
        );
    }

    fn synthetic_planes(seed: u64, truth: &RigidTransform, nplanes: usize, npoints: usize) -> Vec<PlaneObservation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lidar_from_cam = truth.inverse();
        (0..nplanes)
            .map(|_| {
                // board 1.5–3 m ahead, tilted up to ~50° from facing the camera
                let centre = Vector3::new(
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(1.5..3.0),
                );
                let tilt = rotation_about(
                    Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0),
                    rng.random_range(0.3..0.9),
                );
                let mut n = tilt * Vector3::new(0.0, 0.0, -1.0);
                if n.dot(&centre) > 0.0 {
                    n = -n;
                }
                let d = n.dot(&centre);
                let u = n.cross(&Vector3::x()).normalize();
                let v = n.cross(&u);
                let pts = (0..npoints)
                    .map(|_| {
                        let pc = centre + u * rng.random_range(-0.4..0.4) + v * rng.random_range(-0.3..0.3);
                        lidar_from_cam.transform_point(&pc)
                    })
                    .collect();
                PlaneObservation::new(n, d, pts).unwrap()
            })
            .collect()
    }

    fn t_c_l_true() -> RigidTransform {
        RigidTransform::from_parts(
            FRAME_CAMERA,
            FRAME_LIDAR,
            rotation_about(Vector3::new(1.0, -1.0, 1.0), 2.0),
            Vector3::new(0.02, -0.09, 0.05),
        )
    }

    #[test]
    fn plane_solver_at_truth_does_not_move() {
        let truth = t_c_l_true();
        let obs = synthetic_planes(4, &truth, 6, 50);
        let sol = solve_point_to_plane(&obs, &truth).unwrap();
        assert!(sol.cost < 1e-20, "{}", sol.cost);
        let (ang, dist) = sol.t_c_l.distance_to(&truth);
        assert!(ang < 1e-12 && dist < 1e-12);
    }

    #[test]
    fn plane_solver_recovers_from_perturbed_start() {
        let truth = t_c_l_true();
        let obs = synthetic_planes(8, &truth, 6, 50);
        let start = RigidTransform::from_parts(
            FRAME_CAMERA,
            FRAME_LIDAR,
            rotation_about(Vector3::new(0.3, 1.0, -0.2), 10f64.to_radians()) * truth.rotation(),
            truth.translation() + Vector3::new(0.2, 0.0, 0.0),
        );
        let sol = solve_point_to_plane(&obs, &start).unwrap();
        let (ang, dist) = sol.t_c_l.distance_to(&truth);
        assert!(ang < 1e-6 && dist < 1e-6, "{ang} {dist}");
        assert!(sol.rms_residual < 1e-6);
    }

    #[test]
    fn plane_solver_parallel_normals_rank_deficient() {
        let truth = t_c_l_true();
        let n = Vector3::new(0.0, 0.0, -1.0);
        let obs: Vec<_> = (0..4)
            .map(|k| {
                let d = -(2.0 + k as f64 * 0.3);
                let pts = (0..10)
                    .map(|i| {
                        truth
                            .inverse()
                            .transform_point(&Vector3::new(i as f64 * 0.1, (i % 3) as f64 * 0.1, -d))
                    })
                    .collect();
                PlaneObservation::new(n, d, pts).unwrap()
            })
            .collect();
        assert_eq!(solve_point_to_plane(&obs, &truth), Err(CalibrationError::RankDeficient));
    }

    #[test]
    fn plane_observation_validation() {
        let pts = vec![Vector3::zeros(); 3];
        assert!(PlaneObservation::new(Vector3::new(0.0, 0.0, 2.0), -1.0, pts.clone()).is_err());
        assert!(PlaneObservation::new(Vector3::new(0.0, 0.0, -1.0), 1.0, pts.clone()).is_err());
        assert!(PlaneObservation::new(Vector3::new(0.0, 0.0, -1.0), -1.0, pts[..2].to_vec()).is_err());
        assert!(PlaneObservation::new(Vector3::new(0.0, 0.0, -1.0), -1.0, pts).is_ok());
    }

    #[test]
    fn solvers_are_deterministic() {
        let x = x_true();
        let s = hand_eye_samples(2, &x, 7);
        assert_eq!(solve_eye_in_hand(&s).unwrap(), solve_eye_in_hand(&s).unwrap());
        let truth = t_c_l_true();
        let obs = synthetic_planes(3, &truth, 5, 20);
        let start = RigidTransform::from_parts(FRAME_CAMERA, FRAME_LIDAR, *truth.rotation(), Vector3::zeros());
        assert_eq!(
            solve_point_to_plane(&obs, &start).unwrap(),
            solve_point_to_plane(&obs, &start).unwrap()
        );
    }

    #[test]
    fn input_files_parse() {
        let he = "[[sample]]\nt_w_ms = { translation = [0.0, 0.0, 1.0], rotation_wxyz = [1.0, 0.0, 0.0, 0.0] }\n\
                  t_cb_c = { translation = [0.0, 0.0, -2.0], rotation_wxyz = [1.0, 0.0, 0.0, 0.0] }\n";
        let s = parse_hand_eye(he).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].t_cb_c.parent(), FRAME_CHECKERBOARD);
        let planes = "initial = { translation = [0.0, 0.0, 0.0], rotation_wxyz = [1.0, 0.0, 0.0, 0.0] }\n\
                      [[plane]]\nnormal = [0.0, 0.0, -1.0]\nd = -2.0\npoints = [[0.0, 0.0, 2.0], [1.0, 0.0, 2.0], [0.0, 1.0, 2.0]]\n";
        let (obs, init) = parse_planes(planes).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(init.child(), FRAME_LIDAR);
        assert!(parse_planes("initial = 3").is_err());
    }
}
