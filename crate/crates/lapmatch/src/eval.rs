//! Evaluation of correspondences against synthetic ground truth.
//!
//! Accuracy counts a matched pair as correct when some pair of its
//! voxels' labels lies within an arc-length tolerance along the
//! kinematic tree. Cross-sectional position is deliberately ignored: a
//! low-dimensional spectral embedding cannot resolve rotational freedom
//! around a limb axis.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::pipeline::{CorrespondenceRecord, MatchLabel};
use crate::synth::{arc_distance, ArticulatedModel, Label, ModelKind, SyntheticShape};
use crate::voxel::VoxelSet;
use crate::{Error, Result};

/// Per-voxel ground-truth labels of one synthetic shape.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub model_name: String,
    pub sampling: f64,
    map: HashMap<[i32; 3], Vec<Label>>,
}

impl GroundTruth {
    pub fn from_shape(shape: &SyntheticShape, model: &ArticulatedModel) -> GroundTruth {
        let map = shape
            .voxels
            .points
            .iter()
            .zip(&shape.labels)
            .map(|(p, l)| (*p, l.clone()))
            .collect();
        GroundTruth {
            model_name: model.name.clone(),
            sampling: shape.sampling,
            map,
        }
    }

    pub fn labels(&self, voxel: [i32; 3]) -> Option<&[Label]> {
        self.map.get(&voxel).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn model(&self) -> Result<ArticulatedModel> {
        let kind = ModelKind::parse(&self.model_name).ok_or_else(|| {
            Error::MissingTruth(format!("unknown model '{}'", self.model_name))
        })?;
        Ok(ArticulatedModel::new(kind))
    }
}

/// Metrics of one evaluated correspondence set.
#[derive(Debug, Clone)]
pub struct EvalMetrics {
    pub matched_pairs: usize,
    pub correct_pairs: usize,
    /// `None` when there are no matched pairs to grade.
    pub accuracy: Option<f64>,
    pub outliers: usize,
    pub unmatched_clusters: usize,
    /// Mean arc-length error over matched pairs, voxel units.
    pub mean_arc_error: Option<f64>,
}

/// Grade correspondences against ground truth at arc tolerance
/// `radius_r` (voxel units).
pub fn evaluate(
    records: &[CorrespondenceRecord],
    voxels_x: &VoxelSet,
    voxels_y: &VoxelSet,
    truth_x: &GroundTruth,
    truth_y: &GroundTruth,
    radius_r: f64,
) -> Result<EvalMetrics> {
    if truth_x.model_name != truth_y.model_name {
        return Err(Error::MissingTruth(format!(
            "ground truths disagree on the model: '{}' vs '{}'",
            truth_x.model_name, truth_y.model_name
        )));
    }
    let model = truth_x.model()?;
    let mut matched_pairs = 0usize;
    let mut correct = 0usize;
    let mut outliers = 0usize;
    let mut unmatched = 0usize;
    let mut arc_sum = 0.0f64;
    for r in records {
        match r.label {
            MatchLabel::Outlier => outliers += 1,
            MatchLabel::Unmatched => unmatched += 1,
            MatchLabel::Matched => {
                let source = voxel_at(voxels_x, r.source_index, "source")?;
                let target = voxel_at(voxels_y, r.target_index, "target")?;
                let labels_x = truth_x.labels(source).ok_or_else(|| {
                    Error::MissingTruth(format!("no labels for source voxel {source:?}"))
                })?;
                let labels_y = truth_y.labels(target).ok_or_else(|| {
                    Error::MissingTruth(format!("no labels for target voxel {target:?}"))
                })?;
                let mut best = f64::INFINITY;
                for &a in labels_x {
                    for &b in labels_y {
                        best = best.min(arc_distance(&model, truth_x.sampling, a, b));
                    }
                }
                matched_pairs += 1;
                arc_sum += best;
                if best <= radius_r {
                    correct += 1;
                }
            }
        }
    }
    let accuracy = (matched_pairs > 0).then(|| correct as f64 / matched_pairs as f64);
    let mean_arc_error = (matched_pairs > 0).then(|| arc_sum / matched_pairs as f64);
    Ok(EvalMetrics {
        matched_pairs,
        correct_pairs: correct,
        accuracy,
        outliers,
        unmatched_clusters: unmatched,
        mean_arc_error,
    })
}

fn voxel_at(voxels: &VoxelSet, index: i64, role: &str) -> Result<[i32; 3]> {
    usize::try_from(index)
        .ok()
        .and_then(|i| voxels.points.get(i))
        .copied()
        .ok_or_else(|| Error::MissingTruth(format!("{role} index {index} out of range")))
}

/// Write a ground-truth file: a header line with the model name and
/// sampling, then one `x y z link u v w` line per label.
pub fn save_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "# model {} sampling {}", truth.model_name, truth.sampling)?;
    let mut entries: Vec<(&[i32; 3], &Vec<Label>)> = truth.map.iter().collect();
    entries.sort_by_key(|(p, _)| **p);
    for (p, labels) in entries {
        for l in labels {
            writeln!(
                file,
                "{} {} {} {} {} {} {}",
                p[0], p[1], p[2], l.link, l.u, l.v, l.w
            )?;
        }
    }
    Ok(())
}

/// Read a ground-truth file written by [`save_truth`].
pub fn load_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::EmptyInput)?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "#" || fields[1] != "model" || fields[3] != "sampling" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected '# model <name> sampling <s>', got '{header}'"),
        });
    }
    let model_name = fields[2].to_string();
    let sampling: f64 = fields[4].parse().map_err(|_| Error::Parse {
        line: 1,
        message: format!("bad sampling '{}'", fields[4]),
    })?;
    let mut map: HashMap<[i32; 3], Vec<Label>> = HashMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let nums: Vec<i64> = line
            .split_whitespace()
            .map(|t| {
                t.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("not an integer: '{t}'"),
                })
            })
            .collect::<Result<_>>()?;
        if nums.len() != 7 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 7 fields, got {}", nums.len()),
            });
        }
        let voxel = [nums[0] as i32, nums[1] as i32, nums[2] as i32];
        map.entry(voxel).or_default().push(Label {
            link: nums[3] as u32,
            u: nums[4] as i32,
            v: nums[5] as i32,
            w: nums[6] as i32,
        });
    }
    if map.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(GroundTruth {
        model_name,
        sampling,
        map,
    })
}
