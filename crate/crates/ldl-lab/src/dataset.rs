//! Synthetic overfit-prone classification tasks, CSV ingestion, and
//! member/nonmember splits.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Whether features are real-valued or restricted to {0,1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Discrete,
}

/// Membership label `s` of a sample relative to a target model's training
/// set: member (`s = 1`) or nonmember (`s = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Member,
    Nonmember,
}

/// A single labeled sample; the unit every attack scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Identity within the originating dataset; stable through splits.
    pub id: usize,
    pub features: Vec<f64>,
    /// Class index in `[0, classes)`.
    pub label: usize,
    pub membership: Membership,
}

/// An ordered collection of samples with shared dimensionality and class
/// count.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub dims: usize,
    pub classes: usize,
    pub feature_kind: FeatureKind,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// How many samples go into the member and nonmember pools, and the seed for
/// drawing them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub member_count: usize,
    pub nonmember_count: usize,
    pub seed: u64,
}

/// Generate `n` samples from `c` isotropic Gaussian clusters in `d`
/// dimensions, then reassign a `label_noise` fraction of labels uniformly at
/// random (the original label may be redrawn).
///
/// Cluster centroids are drawn uniformly in the unit box from the seed, and
/// features are min-max normalized to `[0,1]` per dimension afterwards, so
/// perturbation magnitudes are comparable across tasks. Identical seeds give
/// bitwise-identical datasets. The label noise is what makes a capacious
/// model memorize, i.e. overfit.
pub fn generate_blobs(
    dims: usize,
    classes: usize,
    n: usize,
    spread: f64,
    label_noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if dims == 0 || classes == 0 {
        return Err(Error::invalid("dims and classes must be positive"));
    }
    if n < classes {
        return Err(Error::invalid(format!(
            "need at least one sample per class: n={n} < classes={classes}"
        )));
    }
    if !(spread > 0.0) {
        return Err(Error::invalid(format!("spread must be > 0, got {spread}")));
    }
    if !(0.0..=1.0).contains(&label_noise) {
        return Err(Error::invalid(format!(
            "label_noise must be in [0,1], got {label_noise}"
        )));
    }

    let mut rng = seeds::rng_from(seed);
    let centroids: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dims).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();

    let normal = Normal::new(0.0, spread).expect("spread checked positive");
    let mut samples: Vec<Sample> = (0..n)
        .map(|id| {
            let label = id % classes;
            let features = centroids[label]
                .iter()
                .map(|&center| center + normal.sample(&mut rng))
                .collect();
            Sample {
                id,
                features,
                label,
                membership: Membership::Nonmember,
            }
        })
        .collect();

    for sample in &mut samples {
        if rng.random_range(0.0..1.0) < label_noise {
            sample.label = rng.random_range(0..classes);
        }
    }

    normalize_unit_box(&mut samples, dims);

    Ok(Dataset {
        samples,
        dims,
        classes,
        feature_kind: FeatureKind::Continuous,
    })
}

/// Min-max normalize each dimension to `[0,1]`. Constant dimensions map
/// to 0.
fn normalize_unit_box(samples: &mut [Sample], dims: usize) {
    for dim in 0..dims {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in samples.iter() {
            lo = lo.min(s.features[dim]);
            hi = hi.max(s.features[dim]);
        }
        let range = hi - lo;
        for s in samples.iter_mut() {
            s.features[dim] = if range > 0.0 {
                (s.features[dim] - lo) / range
            } else {
                0.0
            };
        }
    }
}

/// Load a comma-separated file with a header row. The label column is named
/// by `label_column`; every other column is a feature, in header order.
///
/// No quoting support: cells are split on literal commas. Continuous
/// features are min-max normalized to `[0,1]` per dimension; discrete files
/// must contain only 0/1 feature values. The class count is inferred as
/// `max label + 1`.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, kind: FeatureKind) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let path_str = path.display().to_string();
    let format_err = |message: String| Error::Format {
        path: path_str.clone(),
        message,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| format_err("file is empty".to_string()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_idx = columns
        .iter()
        .position(|&c| c == label_column)
        .ok_or_else(|| format_err(format!("no column named '{label_column}' in header")))?;
    let dims = columns.len() - 1;
    if dims == 0 {
        return Err(format_err("no feature columns besides the label".into()));
    }

    let mut samples = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line_no + 1; // 1-based, counting the header as row 1
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(format_err(format!(
                "row {row}: expected {} cells, found {}",
                columns.len(),
                cells.len()
            )));
        }
        let label: usize = cells[label_idx].parse().map_err(|_| {
            format_err(format!(
                "row {row}, column '{label_column}': cannot parse label '{}'",
                cells[label_idx]
            ))
        })?;
        let mut features = Vec::with_capacity(dims);
        for (idx, cell) in cells.iter().enumerate() {
            if idx == label_idx {
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| {
                format_err(format!(
                    "row {row}, column '{}': cannot parse number '{cell}'",
                    columns[idx]
                ))
            })?;
            if kind == FeatureKind::Discrete && value != 0.0 && value != 1.0 {
                return Err(Error::domain(format!(
                    "{path_str}: row {row}, column '{}': discrete features must be 0 or 1, got {value}",
                    columns[idx]
                )));
            }
            features.push(value);
        }
        samples.push(Sample {
            id: samples.len(),
            features,
            label,
            membership: Membership::Nonmember,
        });
    }

    if samples.is_empty() {
        return Err(format_err("no data rows".to_string()));
    }

    let classes = samples.iter().map(|s| s.label).max().unwrap() + 1;
    if kind == FeatureKind::Continuous {
        normalize_unit_box(&mut samples, dims);
    }

    Ok(Dataset {
        samples,
        dims,
        classes,
        feature_kind: kind,
    })
}

/// Draw disjoint member and nonmember pools without replacement using
/// `spec.seed`. Members carry `Membership::Member`, nonmembers
/// `Membership::Nonmember`; sample ids are preserved.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let wanted = spec.member_count + spec.nonmember_count;
    if wanted > dataset.len() {
        return Err(Error::invalid(format!(
            "split needs {wanted} samples but dataset has {}",
            dataset.len()
        )));
    }
    if spec.member_count == 0 || spec.nonmember_count == 0 {
        return Err(Error::invalid("split counts must be positive"));
    }

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = seeds::rng_from(spec.seed);
    order.shuffle(&mut rng);

    let pick = |indices: &[usize], membership: Membership| -> Dataset {
        let samples = indices
            .iter()
            .map(|&i| {
                let mut s = dataset.samples[i].clone();
                s.membership = membership;
                s
            })
            .collect();
        Dataset {
            samples,
            dims: dataset.dims,
            classes: dataset.classes,
            feature_kind: dataset.feature_kind,
        }
    };

    let members = pick(&order[..spec.member_count], Membership::Member);
    let nonmembers = pick(
        &order[spec.member_count..wanted],
        Membership::Nonmember,
    );
    Ok((members, nonmembers))
}

/// The samples left over after [`split`]: everything not drawn into either
/// pool, tagged nonmember. This is the pool a substitute-model adversary
/// trains on.
pub fn split_remainder(dataset: &Dataset, spec: &SplitSpec) -> Result<Dataset> {
    let wanted = spec.member_count + spec.nonmember_count;
    if wanted > dataset.len() {
        return Err(Error::invalid(format!(
            "split needs {wanted} samples but dataset has {}",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = seeds::rng_from(spec.seed);
    order.shuffle(&mut rng);
    let samples = order[wanted..]
        .iter()
        .map(|&i| {
            let mut s = dataset.samples[i].clone();
            s.membership = Membership::Nonmember;
            s
        })
        .collect();
    Ok(Dataset {
        samples,
        dims: dataset.dims,
        classes: dataset.classes,
        feature_kind: dataset.feature_kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn blobs_deterministic_under_seed() {
        let a = generate_blobs(2, 2, 100, 1.0, 0.0, 7).unwrap();
        let b = generate_blobs(2, 2, 100, 1.0, 0.0, 7).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = generate_blobs(2, 2, 100, 1.0, 0.0, 8).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn blobs_normalized_to_unit_box() {
        let d = generate_blobs(3, 4, 200, 0.5, 0.1, 3).unwrap();
        for s in &d.samples {
            assert_eq!(s.features.len(), 3);
            assert!(s.label < 4);
            for &x in &s.features {
                assert!((0.0..=1.0).contains(&x));
            }
        }
    }

    #[test]
    fn blobs_full_label_noise_decouples_labels() {
        // With label_noise = 1 every label is redrawn uniformly; check the
        // class histogram is roughly uniform rather than the exact i % c
        // pattern of the noiseless generator.
        let d = generate_blobs(2, 4, 4000, 0.1, 1.0, 5).unwrap();
        let mut counts = [0usize; 4];
        for s in &d.samples {
            counts[s.label] += 1;
        }
        for &count in &counts {
            assert!((800..=1200).contains(&count), "counts {counts:?}");
        }
        let noiseless = generate_blobs(2, 4, 4000, 0.1, 0.0, 5).unwrap();
        let moved = d
            .samples
            .iter()
            .zip(&noiseless.samples)
            .filter(|(a, b)| a.label != b.label)
            .count();
        assert!(moved > 2500, "only {moved} labels changed");
    }

    #[test]
    fn blobs_rejects_bad_arguments() {
        assert!(generate_blobs(0, 2, 10, 1.0, 0.0, 1).is_err());
        assert!(generate_blobs(2, 0, 10, 1.0, 0.0, 1).is_err());
        assert!(generate_blobs(2, 4, 3, 1.0, 0.0, 1).is_err());
        assert!(generate_blobs(2, 2, 10, 0.0, 0.0, 1).is_err());
        assert!(generate_blobs(2, 2, 10, 1.0, 1.5, 1).is_err());
    }

    #[test]
    fn csv_parses_small_file() {
        let f = write_temp("x,y,label\n0.5,1.0,0\n0.25,0.5,1\n1.0,0.0,1\n");
        let d = load_csv(f.path(), "label", FeatureKind::Continuous).unwrap();
        assert_eq!(d.dims, 2);
        assert_eq!(d.classes, 2);
        assert_eq!(d.len(), 3);
        // min-max normalization puts every column's extremes at 0 and 1
        assert_eq!(d.samples[1].features, vec![0.0, 0.5]);
    }

    #[test]
    fn csv_discrete_rejects_non_binary() {
        let f = write_temp("a,b,label\n0,1,0\n0.5,1,1\n");
        let err = load_csv(f.path(), "label", FeatureKind::Discrete).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn csv_empty_file_is_format_error() {
        let f = write_temp("");
        let err = load_csv(f.path(), "label", FeatureKind::Continuous).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn csv_header_only_is_format_error() {
        let f = write_temp("a,b,label\n");
        let err = load_csv(f.path(), "label", FeatureKind::Continuous).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn csv_parse_failure_names_row_and_column() {
        let f = write_temp("a,b,label\n1.0,oops,0\n");
        let err = load_csv(f.path(), "label", FeatureKind::Continuous).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("'b'"), "{msg}");
    }

    #[test]
    fn split_counts_and_disjointness() {
        let d = generate_blobs(2, 2, 100, 1.0, 0.0, 7).unwrap();
        let spec = SplitSpec {
            member_count: 60,
            nonmember_count: 40,
            seed: 3,
        };
        let (members, nonmembers) = split(&d, &spec).unwrap();
        assert_eq!(members.len(), 60);
        assert_eq!(nonmembers.len(), 40);
        let member_ids: std::collections::HashSet<_> =
            members.samples.iter().map(|s| s.id).collect();
        assert!(nonmembers.samples.iter().all(|s| !member_ids.contains(&s.id)));
        assert!(members.samples.iter().all(|s| s.membership == Membership::Member));
        assert!(nonmembers
            .samples
            .iter()
            .all(|s| s.membership == Membership::Nonmember));
    }

    #[test]
    fn split_deterministic() {
        let d = generate_blobs(2, 2, 100, 1.0, 0.0, 7).unwrap();
        let spec = SplitSpec {
            member_count: 60,
            nonmember_count: 40,
            seed: 3,
        };
        let (m1, n1) = split(&d, &spec).unwrap();
        let (m2, n2) = split(&d, &spec).unwrap();
        assert_eq!(m1.samples, m2.samples);
        assert_eq!(n1.samples, n2.samples);
    }

    #[test]
    fn split_overflow_is_argument_error() {
        let d = generate_blobs(2, 2, 100, 1.0, 0.0, 7).unwrap();
        let spec = SplitSpec {
            member_count: 80,
            nonmember_count: 40,
            seed: 3,
        };
        assert!(matches!(split(&d, &spec), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn split_remainder_is_the_complement() {
        let d = generate_blobs(2, 2, 100, 1.0, 0.0, 7).unwrap();
        let spec = SplitSpec {
            member_count: 30,
            nonmember_count: 30,
            seed: 3,
        };
        let (members, nonmembers) = split(&d, &spec).unwrap();
        let rest = split_remainder(&d, &spec).unwrap();
        assert_eq!(rest.len(), 40);
        let used: std::collections::HashSet<_> = members
            .samples
            .iter()
            .chain(&nonmembers.samples)
            .map(|s| s.id)
            .collect();
        assert!(rest.samples.iter().all(|s| !used.contains(&s.id)));
    }
}
