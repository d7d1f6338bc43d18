//! Synthetic articulated voxel shapes with per-voxel ground truth.
//!
//! Shapes are unions of capsules (cylinders with hemispherical caps)
//! arranged in a kinematic tree. Each link is voxelized on its own local
//! lattice in the rest frame, then transported by the posed rigid
//! transform and rounded onto the world grid. A label identifies the
//! lattice point (link id plus local integer coordinates), so the label
//! multiset is exactly pose-invariant: every pose enumerates the same
//! lattice, only the world positions move.

use std::collections::HashMap;

use crate::voxel::VoxelSet;
use crate::{Error, Result};

/// One capsule in the kinematic tree.
#[derive(Debug, Clone)]
pub struct Link {
    pub parent: Option<usize>,
    /// Attachment point as an arc fraction along the parent axis.
    pub attach: f64,
    /// Lateral offset of the base from the attachment point, in the
    /// parent frame (model units).
    pub offset: [f64; 3],
    /// Rest-pose axis direction in the parent frame.
    pub direction: [f64; 3],
    /// Joint rotation axis in the parent frame.
    pub axis: [f64; 3],
    /// Segment length, model units (caps extend beyond it).
    pub length: f64,
    pub radius: f64,
    /// Joint angle limits in radians, inclusive.
    pub limits: (f64, f64),
}

/// Capsule kinematic tree plus its named poses.
#[derive(Debug, Clone)]
pub struct ArticulatedModel {
    pub name: String,
    pub links: Vec<Link>,
    poses: Vec<(String, Vec<f64>)>,
}

/// The built-in model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Three collinear links, one bending joint per link.
    Chain,
    /// The chain plus one perpendicular branch on the middle link.
    ChainBranch,
    /// Torso, head, two-link arms and legs.
    MannequinLite,
    /// Palm with five fingers.
    HandLite,
}

impl ModelKind {
    pub fn parse(name: &str) -> Option<ModelKind> {
        match name {
            "chain" => Some(ModelKind::Chain),
            "chain-branch" => Some(ModelKind::ChainBranch),
            "mannequin-lite" => Some(ModelKind::MannequinLite),
            "hand-lite" => Some(ModelKind::HandLite),
            _ => None,
        }
    }
}

const X: [f64; 3] = [1.0, 0.0, 0.0];
const Y: [f64; 3] = [0.0, 1.0, 0.0];
const Z: [f64; 3] = [0.0, 0.0, 1.0];
const ZERO: [f64; 3] = [0.0, 0.0, 0.0];

fn link(
    parent: Option<usize>,
    attach: f64,
    offset: [f64; 3],
    direction: [f64; 3],
    axis: [f64; 3],
    length: f64,
    radius: f64,
    limit: f64,
) -> Link {
    Link {
        parent,
        attach,
        offset,
        direction,
        axis,
        length,
        radius,
        limits: (-limit, limit),
    }
}

impl ArticulatedModel {
    pub fn new(kind: ModelKind) -> ArticulatedModel {
        match kind {
            ModelKind::Chain => chain_model(false),
            ModelKind::ChainBranch => chain_model(true),
            ModelKind::MannequinLite => mannequin_model(),
            ModelKind::HandLite => hand_model(),
        }
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    /// Rest pose: all joint angles zero.
    pub fn rest_pose(&self) -> Vec<f64> {
        vec![0.0; self.links.len()]
    }

    /// Look up a named pose of this model.
    pub fn named_pose(&self, name: &str) -> Result<Vec<f64>> {
        self.poses
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.clone())
            .ok_or_else(|| {
                let known: Vec<&str> = self.poses.iter().map(|(n, _)| n.as_str()).collect();
                Error::InvalidPose(format!(
                    "unknown pose '{name}' for model {}; known: {known:?}",
                    self.name
                ))
            })
    }

    pub fn pose_names(&self) -> Vec<&str> {
        self.poses.iter().map(|(n, _)| n.as_str()).collect()
    }

    fn check_pose(&self, pose: &[f64]) -> Result<()> {
        if pose.len() != self.links.len() {
            return Err(Error::InvalidPose(format!(
                "model {} has {} joints, pose gives {}",
                self.name,
                self.links.len(),
                pose.len()
            )));
        }
        for (i, (&angle, l)) in pose.iter().zip(&self.links).enumerate() {
            if !angle.is_finite() || angle < l.limits.0 || angle > l.limits.1 {
                return Err(Error::InvalidPose(format!(
                    "joint {i} angle {angle} outside limits [{}, {}]",
                    l.limits.0, l.limits.1
                )));
            }
        }
        Ok(())
    }
}

fn chain_model(branch: bool) -> ArticulatedModel {
    let mut links = vec![
        link(None, 0.0, ZERO, X, Z, 12.0, 1.6, 2.4),
        link(Some(0), 1.0, ZERO, X, Z, 9.0, 1.6, 2.4),
        link(Some(1), 1.0, ZERO, X, Z, 6.0, 1.6, 2.4),
    ];
    let mut poses = vec![
        ("straight".to_string(), vec![0.0; 3]),
        ("bent".to_string(), vec![0.0, std::f64::consts::FRAC_PI_2, 0.0]),
    ];
    if branch {
        // branch sized for ~10% extra volume: len*r^2 ratio 5.7/69.1
        links.push(link(Some(1), 0.5, ZERO, Z, Y, 5.0, 1.14, 0.0));
        for (_, p) in poses.iter_mut() {
            p.push(0.0);
        }
    }
    ArticulatedModel {
        name: if branch { "chain-branch" } else { "chain" }.to_string(),
        links,
        poses,
    }
}

fn mannequin_model() -> ArticulatedModel {
    // the torso points along world Z; its local frame has X = world Z,
    // Y = world Y, Z = world -X, so "down" in torso coordinates is -X
    let leg_l = norm3([-1.0, 0.3, 0.0]);
    let leg_r = norm3([-1.0, -0.3, 0.0]);
    let links = vec![
        // 0 torso, 1 head
        link(None, 0.0, ZERO, Z, Y, 14.0, 2.2, 0.5),
        link(Some(0), 1.0, ZERO, X, Y, 4.0, 1.6, 0.8),
        // 2-3 left arm, 4-5 right arm; swing about X (world Z)
        link(Some(0), 0.85, [0.0, 2.0, 0.0], Y, X, 7.0, 1.2, 2.0),
        link(Some(2), 1.0, ZERO, X, Z, 7.0, 1.1, 2.4),
        link(Some(0), 0.85, [0.0, -2.0, 0.0], [0.0, -1.0, 0.0], X, 7.0, 1.2, 2.0),
        link(Some(4), 1.0, ZERO, X, Z, 7.0, 1.1, 2.4),
        // 6-7 left leg, 8-9 right leg
        link(Some(0), 0.0, [0.0, 1.5, 0.0], leg_l, Y, 8.0, 1.4, 1.5),
        link(Some(6), 1.0, ZERO, X, Y, 8.0, 1.2, 2.4),
        link(Some(0), 0.0, [0.0, -1.5, 0.0], leg_r, Y, 8.0, 1.4, 1.5),
        link(Some(8), 1.0, ZERO, X, Y, 8.0, 1.2, 2.4),
    ];
    // swinging both arms past the midline brings the hand tips together
    let swing = 96.0f64.to_radians();
    let mut touching = vec![0.0; 10];
    touching[2] = -swing;
    touching[4] = swing;
    ArticulatedModel {
        name: "mannequin-lite".to_string(),
        links,
        poses: vec![
            ("hands-apart".to_string(), vec![0.0; 10]),
            ("hands-touching".to_string(), touching),
        ],
    }
}

fn hand_model() -> ArticulatedModel {
    // palm along world Z; finger directions continue local X with a fan
    let mut links = vec![link(None, 0.0, ZERO, Z, Y, 6.0, 2.6, 0.5)];
    for i in 0..5 {
        let spread = (i as f64 - 2.0) * 1.2;
        let dir = norm3([1.0, (i as f64 - 2.0) * 0.22, 0.0]);
        links.push(link(
            Some(0),
            1.0,
            [0.0, spread, 0.0],
            dir,
            Y,
            5.0,
            0.55,
            1.6,
        ));
    }
    let mut curled = vec![0.0; 6];
    for angle in curled.iter_mut().skip(1) {
        *angle = 1.1;
    }
    ArticulatedModel {
        name: "hand-lite".to_string(),
        links,
        poses: vec![
            ("open".to_string(), vec![0.0; 6]),
            ("curled".to_string(), curled),
        ],
    }
}

/// Ground-truth identity of one capsule lattice point: link id plus local
/// integer coordinates (`u` along the axis, `v`/`w` across).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub link: u32,
    pub u: i32,
    pub v: i32,
    pub w: i32,
}

/// Non-adjacent capsule pair closer than the sum of radii plus one voxel.
#[derive(Debug, Clone)]
pub struct Contact {
    pub link_a: usize,
    pub link_b: usize,
    /// Axis-to-axis distance in model units.
    pub distance: f64,
    /// Midpoint of the closest approach, voxel units.
    pub midpoint: [f64; 3],
}

/// A generated shape with pose-stable ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticShape {
    pub voxels: VoxelSet,
    /// Per-voxel labels, parallel to `voxels.points`; a voxel near a
    /// joint can carry labels from several links.
    pub labels: Vec<Vec<Label>>,
    pub pose: Vec<f64>,
    pub sampling: f64,
    pub contacts: Vec<Contact>,
    /// Lattice points that rounded onto an already-claimed voxel.
    pub merged_points: usize,
}

impl SyntheticShape {
    /// All labels of all voxels, sorted: identical across poses of the
    /// same model at the same sampling.
    pub fn label_multiset(&self) -> Vec<Label> {
        let mut all: Vec<Label> = self.labels.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }
}

fn norm3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

type Mat3 = [[f64; 3]; 3];

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|i| a[r][i] * b[i][c]).sum();
        }
    }
    out
}

fn mat_apply(a: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// Rodrigues rotation about a unit axis.
fn axis_angle(axis: [f64; 3], angle: f64) -> Mat3 {
    let a = norm3(axis);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let (x, y, z) = (a[0], a[1], a[2]);
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Rest frame of a link: the minimal rotation taking local X onto the
/// axis direction. The roll is a pure function of the direction so the
/// local lattice is pose-stable, and near-X directions keep the parent
/// frame essentially unchanged.
fn rest_frame(direction: [f64; 3]) -> Mat3 {
    let d = norm3(direction);
    let cos = d[0];
    if cos > 1.0 - 1e-12 {
        return IDENTITY;
    }
    if cos < -1.0 + 1e-12 {
        // opposite direction: half turn about Z
        return axis_angle(Z, std::f64::consts::PI);
    }
    let axis = [0.0, -d[2], d[1]]; // X x d
    axis_angle(axis, cos.acos())
}

/// World pose of every link: orientation matrix plus base point (model
/// units).
fn link_poses(model: &ArticulatedModel, pose: &[f64]) -> Vec<(Mat3, [f64; 3])> {
    let mut out: Vec<(Mat3, [f64; 3])> = Vec::with_capacity(model.links.len());
    for (i, l) in model.links.iter().enumerate() {
        let (parent_o, parent_base, parent_len) = match l.parent {
            Some(p) => {
                let (o, b) = &out[p];
                (*o, *b, model.links[p].length)
            }
            None => (IDENTITY, ZERO, 0.0),
        };
        let joint = axis_angle(l.axis, pose[i]);
        let orient = mat_mul(&mat_mul(&parent_o, &joint), &rest_frame(l.direction));
        let axis_world = mat_apply(&parent_o, X);
        let offset_world = mat_apply(&parent_o, l.offset);
        let base = [
            parent_base[0] + l.attach * parent_len * axis_world[0] + offset_world[0],
            parent_base[1] + l.attach * parent_len * axis_world[1] + offset_world[1],
            parent_base[2] + l.attach * parent_len * axis_world[2] + offset_world[2],
        ];
        out.push((orient, base));
    }
    out
}

/// Enumerate the local capsule lattice of one link in voxel units.
///
/// Non-root links skip their start cap and the `u = 0` disk (the parent
/// owns that plane); links whose children attach at the far end skip the
/// end cap symmetrically.
fn link_lattice(model: &ArticulatedModel, idx: usize, sampling: f64) -> Vec<[i32; 3]> {
    let l = &model.links[idx];
    let len_vox = (l.length * sampling).round() as i32;
    let r = l.radius * sampling;
    let r_ceil = r.ceil() as i32;
    let r2 = r * r;
    let start_cap = l.parent.is_none();
    let end_cap = !model
        .links
        .iter()
        .any(|c| c.parent == Some(idx) && c.attach >= 0.999);
    let u_min = if start_cap { -r_ceil } else { 1 };
    let u_max = if end_cap { len_vox + r_ceil } else { len_vox };
    let mut out = Vec::new();
    for u in u_min..=u_max {
        let axial = if u < 0 {
            u as f64
        } else if u > len_vox {
            (u - len_vox) as f64
        } else {
            0.0
        };
        let cross_budget = r2 - axial * axial;
        if cross_budget < 0.0 {
            continue;
        }
        for v in -r_ceil..=r_ceil {
            for w in -r_ceil..=r_ceil {
                if (v * v + w * w) as f64 <= cross_budget {
                    out.push([u, v, w]);
                }
            }
        }
    }
    out
}

fn segment_distance(p1: [f64; 3], q1: [f64; 3], p2: [f64; 3], q2: [f64; 3]) -> (f64, [f64; 3]) {
    let d1 = [q1[0] - p1[0], q1[1] - p1[1], q1[2] - p1[2]];
    let d2 = [q2[0] - p2[0], q2[1] - p2[1], q2[2] - p2[2]];
    let r = [p1[0] - p2[0], p1[1] - p2[1], p1[2] - p2[2]];
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let (a, e, f) = (dot(&d1, &d1), dot(&d2, &d2), dot(&d2, &r));
    let (mut s, mut t);
    if a <= 1e-12 && e <= 1e-12 {
        s = 0.0;
        t = 0.0;
    } else if a <= 1e-12 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(&d1, &r);
        if e <= 1e-12 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(&d1, &d2);
            let denom = a * e - b * b;
            s = if denom > 1e-12 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
        }
    }
    let c1 = [p1[0] + s * d1[0], p1[1] + s * d1[1], p1[2] + s * d1[2]];
    let c2 = [p2[0] + t * d2[0], p2[1] + t * d2[1], p2[2] + t * d2[2]];
    let diff = [c1[0] - c2[0], c1[1] - c2[1], c1[2] - c2[2]];
    (
        dot(&diff, &diff).sqrt(),
        [
            (c1[0] + c2[0]) / 2.0,
            (c1[1] + c2[1]) / 2.0,
            (c1[2] + c2[2]) / 2.0,
        ],
    )
}

fn find_contacts(
    model: &ArticulatedModel,
    poses: &[(Mat3, [f64; 3])],
    sampling: f64,
) -> Vec<Contact> {
    let mut out = Vec::new();
    let n = model.links.len();
    for a in 0..n {
        for b in (a + 1)..n {
            if model.links[b].parent == Some(a) || model.links[a].parent == Some(b) {
                continue;
            }
            let seg = |i: usize| {
                let (o, base) = &poses[i];
                let tip = mat_apply(o, [model.links[i].length, 0.0, 0.0]);
                (
                    *base,
                    [base[0] + tip[0], base[1] + tip[1], base[2] + tip[2]],
                )
            };
            let (p1, q1) = seg(a);
            let (p2, q2) = seg(b);
            let (dist, mid) = segment_distance(p1, q1, p2, q2);
            let threshold = model.links[a].radius + model.links[b].radius + 1.0 / sampling;
            if dist < threshold {
                out.push(Contact {
                    link_a: a,
                    link_b: b,
                    distance: dist,
                    midpoint: [mid[0] * sampling, mid[1] * sampling, mid[2] * sampling],
                });
            }
        }
    }
    out
}

/// Voxelize the model in the given pose at `sampling` voxels per model
/// unit.
pub fn synthesize(
    model: &ArticulatedModel,
    pose: &[f64],
    sampling: f64,
) -> Result<SyntheticShape> {
    if !(sampling > 0.0) {
        return Err(Error::InvalidPose(format!(
            "sampling must be positive, got {sampling}"
        )));
    }
    model.check_pose(pose)?;
    let poses = link_poses(model, pose);
    let mut map: HashMap<[i32; 3], Vec<Label>> = HashMap::new();
    let mut merged = 0usize;
    for (idx, (orient, base)) in poses.iter().enumerate() {
        let base_vox = [
            base[0] * sampling,
            base[1] * sampling,
            base[2] * sampling,
        ];
        for p in link_lattice(model, idx, sampling) {
            let local = [p[0] as f64, p[1] as f64, p[2] as f64];
            let world = mat_apply(orient, local);
            let voxel = [
                (base_vox[0] + world[0]).round() as i32,
                (base_vox[1] + world[1]).round() as i32,
                (base_vox[2] + world[2]).round() as i32,
            ];
            let entry = map.entry(voxel).or_default();
            if !entry.is_empty() {
                merged += 1;
            }
            entry.push(Label {
                link: idx as u32,
                u: p[0],
                v: p[1],
                w: p[2],
            });
        }
    }
    let mut points: Vec<[i32; 3]> = map.keys().copied().collect();
    points.sort_unstable();
    let labels: Vec<Vec<Label>> = points.iter().map(|p| map.remove(p).unwrap()).collect();
    let (voxels, dups) = VoxelSet::new(points, 1.0 / sampling)?;
    debug_assert_eq!(dups, 0);
    let contacts = find_contacts(model, &poses, sampling);
    Ok(SyntheticShape {
        voxels,
        labels,
        pose: pose.to_vec(),
        sampling,
        contacts,
        merged_points: merged,
    })
}

/// Arc-length distance between two labels along the kinematic tree, in
/// voxel units. Cross-sectional coordinates are ignored; positions off
/// the segment (cap voxels) are clamped onto it.
pub fn arc_distance(model: &ArticulatedModel, sampling: f64, a: Label, b: Label) -> f64 {
    // path to the root: (link, arc position on that link in voxel units)
    let path = |label: Label| -> Vec<(usize, f64)> {
        let mut link = label.link as usize;
        let len_vox = model.links[link].length * sampling;
        let mut arc = (label.u as f64).clamp(0.0, len_vox);
        let mut out = vec![(link, arc)];
        while let Some(parent) = model.links[link].parent {
            arc = model.links[link].attach * model.links[parent].length * sampling;
            link = parent;
            out.push((link, arc));
        }
        out
    };
    let pa = path(a);
    let pb = path(b);
    // deepest common link: paths share a suffix ending at the root
    let pos_b: HashMap<usize, usize> = pb.iter().enumerate().map(|(i, &(l, _))| (l, i)).collect();
    let (mut ja, mut jb) = (pa.len() - 1, pb.len() - 1);
    for (i, &(l, _)) in pa.iter().enumerate() {
        if let Some(&j) = pos_b.get(&l) {
            ja = i;
            jb = j;
            break;
        }
    }
    let climb = |p: &[(usize, f64)], j: usize| -> f64 { p[..j].iter().map(|&(_, arc)| arc).sum() };
    climb(&pa, ja) + climb(&pb, jb) + (pa[ja].1 - pb[jb].1).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashSet, VecDeque};

    fn connected_components(voxels: &VoxelSet) -> usize {
        let set: HashSet<[i32; 3]> = voxels.points.iter().copied().collect();
        let mut seen: HashSet<[i32; 3]> = HashSet::new();
        let mut components = 0;
        for &start in &voxels.points {
            if seen.contains(&start) {
                continue;
            }
            components += 1;
            let mut queue = VecDeque::from([start]);
            seen.insert(start);
            while let Some(p) = queue.pop_front() {
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            let q = [p[0] + dx, p[1] + dy, p[2] + dz];
                            if set.contains(&q) && seen.insert(q) {
                                queue.push_back(q);
                            }
                        }
                    }
                }
            }
        }
        components
    }

    #[test]
    fn straight_chain_is_one_component() {
        let model = ArticulatedModel::new(ModelKind::Chain);
        let shape = synthesize(&model, &model.named_pose("straight").unwrap(), 4.0).unwrap();
        assert_eq!(connected_components(&shape.voxels), 1);
        assert!(shape.voxels.len() > 1000);
    }

    #[test]
    fn bent_chain_preserves_label_multiset() {
        let model = ArticulatedModel::new(ModelKind::Chain);
        let straight = synthesize(&model, &model.named_pose("straight").unwrap(), 2.0).unwrap();
        let bent = synthesize(&model, &model.named_pose("bent").unwrap(), 2.0).unwrap();
        assert_eq!(straight.label_multiset(), bent.label_multiset());
        assert_eq!(connected_components(&bent.voxels), 1);
    }

    #[test]
    fn generic_angle_preserves_label_multiset() {
        let model = ArticulatedModel::new(ModelKind::Chain);
        let rest = synthesize(&model, &model.rest_pose(), 2.0).unwrap();
        let posed = synthesize(&model, &[0.3, -0.7, 1.1], 2.0).unwrap();
        assert_eq!(rest.label_multiset(), posed.label_multiset());
    }

    #[test]
    fn chain_voxel_count_near_two_thousand() {
        let model = ArticulatedModel::new(ModelKind::Chain);
        let shape = synthesize(&model, &model.rest_pose(), 2.0).unwrap();
        assert!(
            (1500..3000).contains(&shape.voxels.len()),
            "got {}",
            shape.voxels.len()
        );
    }

    #[test]
    fn branch_adds_about_ten_percent() {
        let plain = ArticulatedModel::new(ModelKind::Chain);
        let branched = ArticulatedModel::new(ModelKind::ChainBranch);
        let a = synthesize(&plain, &plain.rest_pose(), 2.0).unwrap();
        let b = synthesize(&branched, &branched.rest_pose(), 2.0).unwrap();
        let extra = b.voxels.len() as f64 / a.voxels.len() as f64 - 1.0;
        assert!((0.05..0.15).contains(&extra), "extra fraction {extra}");
        assert_eq!(connected_components(&b.voxels), 1);
    }

    #[test]
    fn mannequin_hands_touching_reports_forearm_contact() {
        let model = ArticulatedModel::new(ModelKind::MannequinLite);
        let apart = synthesize(&model, &model.named_pose("hands-apart").unwrap(), 2.0).unwrap();
        let touching =
            synthesize(&model, &model.named_pose("hands-touching").unwrap(), 2.0).unwrap();
        let forearms = |s: &SyntheticShape| {
            s.contacts
                .iter()
                .any(|c| (c.link_a, c.link_b) == (3, 5) || (c.link_a, c.link_b) == (5, 3))
        };
        assert!(forearms(&touching), "{:?}", touching.contacts);
        assert!(!forearms(&apart), "{:?}", apart.contacts);
        assert_eq!(touching.label_multiset(), apart.label_multiset());
        assert_eq!(connected_components(&apart.voxels), 1);
        assert_eq!(connected_components(&touching.voxels), 1);
    }

    #[test]
    fn invalid_poses_rejected() {
        let model = ArticulatedModel::new(ModelKind::Chain);
        assert!(matches!(
            synthesize(&model, &[0.0, 0.0], 2.0),
            Err(Error::InvalidPose(_))
        ));
        assert!(matches!(
            synthesize(&model, &[0.0, 9.0, 0.0], 2.0),
            Err(Error::InvalidPose(_))
        ));
        assert!(matches!(
            model.named_pose("no-such-pose"),
            Err(Error::InvalidPose(_))
        ));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let model = ArticulatedModel::new(ModelKind::MannequinLite);
        let pose = model.named_pose("hands-touching").unwrap();
        let a = synthesize(&model, &pose, 2.0).unwrap();
        let b = synthesize(&model, &pose, 2.0).unwrap();
        assert_eq!(a.voxels.points, b.voxels.points);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn arc_distance_same_link() {
        let model = ArticulatedModel::new(ModelKind::Chain);
        let l = |link, u| Label { link, u, v: 0, w: 0 };
        assert_eq!(arc_distance(&model, 2.0, l(0, 3), l(0, 10)), 7.0);
    }

    #[test]
    fn arc_distance_across_joint() {
        let model = ArticulatedModel::new(ModelKind::Chain);
        let l = |link, u| Label { link, u, v: 0, w: 0 };
        // link 0 has 24 voxels at sampling 2; u=22 to joint is 2, plus 3
        assert_eq!(arc_distance(&model, 2.0, l(0, 22), l(1, 3)), 5.0);
        assert_eq!(arc_distance(&model, 2.0, l(1, 3), l(0, 22)), 5.0);
    }

    #[test]
    fn arc_distance_through_branch_point() {
        let model = ArticulatedModel::new(ModelKind::ChainBranch);
        let l = |link, u| Label { link, u, v: 0, w: 0 };
        // branch attaches mid link 1 (arc 9 of 18); link 2 attaches at 18
        assert_eq!(arc_distance(&model, 2.0, l(3, 2), l(2, 4)), 2.0 + 9.0 + 4.0);
    }

    #[test]
    fn arc_distance_clamps_cap_voxels() {
        let model = ArticulatedModel::new(ModelKind::Chain);
        let a = Label { link: 2, u: 14, v: 0, w: 0 }; // cap beyond len 12
        let b = Label { link: 2, u: 12, v: 3, w: 0 };
        assert_eq!(arc_distance(&model, 2.0, a, b), 0.0);
    }
}
