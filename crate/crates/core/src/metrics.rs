//! Epoch-based ROC analysis.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Sensitivity/specificity at each threshold; a score at or above the
/// threshold counts as a seizure prediction. Thresholds run from `+∞`
/// through every distinct score down to `−∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub sensitivity: Vec<f64>,
    pub specificity: Vec<f64>,
    pub positives: usize,
    pub negatives: usize,
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("score {} at epoch {i} is not finite", scores[i])));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (p, n) = (positives as f64, negatives as f64);
    let mut curve = RocCurve {
        thresholds: vec![f64::INFINITY],
        sensitivity: vec![0.0],
        specificity: vec![1.0],
        positives,
        negatives,
    };
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.thresholds.push(s);
        curve.sensitivity.push(tp as f64 / p);
        curve.specificity.push(1.0 - fp as f64 / n);
    }
    curve.thresholds.push(f64::NEG_INFINITY);
    curve.sensitivity.push(1.0);
    curve.specificity.push(0.0);
    Ok(curve)
}

/// Trapezoidal area under sensitivity vs `1 − specificity`, in percent.
pub fn auc(curve: &RocCurve) -> f64 {
    100.0 * partial_area(curve, 1.0)
}

/// Mean sensitivity over specificities in `[0.9, 1]`, in percent.
pub fn auc90(curve: &RocCurve) -> f64 {
    100.0 * partial_area(curve, 0.1) / 0.1
}

/// Area over false-positive rates in `[0, max_fpr]`, interpolating
/// linearly across the boundary.
fn partial_area(curve: &RocCurve, max_fpr: f64) -> f64 {
    let mut area = 0.0;
    for k in 1..curve.sensitivity.len() {
        let (x0, x1) = (1.0 - curve.specificity[k - 1], 1.0 - curve.specificity[k]);
        let (y0, y1) = (curve.sensitivity[k - 1], curve.sensitivity[k]);
        if x0 >= max_fpr {
            break;
        }
        if x1 <= max_fpr {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y = y0 + (y1 - y0) * (max_fpr - x0) / (x1 - x0);
            area += (max_fpr - x0) * (y0 + y) / 2.0;
            break;
        }
    }
    area
}

/// AUC and AUC90 of one score/label set.
pub fn auc_pair(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    let c = roc_curve(scores, labels)?;
    Ok((auc(&c), auc90(&c)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    MeanPerSubject,
    Concatenated,
}

/// Per-epoch scores and ground truth of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectScores {
    pub subject: String,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mode: AggregateMode,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub auc90_mean: f64,
    pub auc90_std: f64,
    /// Subjects that contributed.
    pub n_subjects: usize,
    /// Subjects left out of the per-subject mean for lacking one class.
    pub excluded: Vec<String>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation of per-subject AUCs, or one AUC over
/// the pooled epochs of every subject.
pub fn aggregate(subjects: &[SubjectScores], mode: AggregateMode) -> Result<Summary> {
    if subjects.is_empty() {
        return Err(Error::InvalidArgument("no subjects to aggregate".into()));
    }
    match mode {
        AggregateMode::MeanPerSubject => {
            let mut aucs = Vec::new();
            let mut auc90s = Vec::new();
            let mut excluded = Vec::new();
            for s in subjects {
                match auc_pair(&s.scores, &s.labels) {
                    Ok((a, a90)) => {
                        aucs.push(a);
                        auc90s.push(a90);
                    }
                    Err(Error::SingleClass) => excluded.push(s.subject.clone()),
                    Err(e) => return Err(e),
                }
            }
            if aucs.is_empty() {
                return Err(Error::SingleClass);
            }
            let (auc_mean, auc_std) = mean_std(&aucs);
            let (auc90_mean, auc90_std) = mean_std(&auc90s);
            Ok(Summary { mode, auc_mean, auc_std, auc90_mean, auc90_std, n_subjects: aucs.len(), excluded })
        }
        AggregateMode::Concatenated => {
            let scores: Vec<f64> = subjects.iter().flat_map(|s| s.scores.iter().copied()).collect();
            let labels: Vec<bool> = subjects.iter().flat_map(|s| s.labels.iter().copied()).collect();
            if subjects.iter().any(|s| s.scores.len() != s.labels.len()) {
                return Err(Error::Shape("scores and labels differ in length".into()));
            }
            let (a, a90) = auc_pair(&scores, &labels)?;
            Ok(Summary {
                mode,
                auc_mean: a,
                auc_std: 0.0,
                auc90_mean: a90,
                auc90_std: 0.0,
                n_subjects: subjects.len(),
                excluded: Vec::new(),
            })
        }
    }
}

/// Share of the remaining error removed: `100·(new − base)/(100 − base)`.
pub fn relative_improvement(new_auc: f64, base_auc: f64) -> Result<f64> {
    if base_auc >= 100.0 {
        return Err(Error::InvalidArgument(format!("baseline AUC {base_auc} leaves no room for improvement")));
    }
    Ok(100.0 * (new_auc - base_auc) / (100.0 - base_auc))
}

/// `threshold,sensitivity,specificity` rows.
pub fn roc_to_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,sensitivity,specificity\n");
    for k in 0..curve.thresholds.len() {
        let _ = writeln!(s, "{},{:.6},{:.6}", curve.thresholds[k], curve.sensitivity[k], curve.specificity[k]);
    }
    s
}

/// One row per method, columns as in a mean/std results table.
pub fn summary_to_csv(rows: &[(String, Summary)]) -> String {
    let mut s = String::from("method,aggregation,auc_mean,auc_std,auc90_mean,auc90_std,n_subjects,excluded\n");
    for (name, m) in rows {
        let agg = match m.mode {
            AggregateMode::MeanPerSubject => "mean",
            AggregateMode::Concatenated => "concatenated",
        };
        let _ = writeln!(
            s,
            "{name},{agg},{:.2},{:.2},{:.2},{:.2},{},{}",
            m.auc_mean,
            m.auc_std,
            m.auc90_mean,
            m.auc90_std,
            m.n_subjects,
            m.excluded.join(";")
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Mann–Whitney statistic with half credit for ties, in percent.
    fn pair_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                num += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
        100.0 * num / pairs
    }

    #[test]
    fn roc_examples() {
        let s = [0.9, 0.8, 0.4, 0.2];
        let perfect = roc_curve(&s, &[true, true, false, false]).unwrap();
        assert_eq!(auc(&perfect), 100.0);
        assert_eq!(auc90(&perfect), 100.0);
        assert_eq!((perfect.sensitivity[0], perfect.specificity[0]), (0.0, 1.0));
        assert_eq!((*perfect.sensitivity.last().unwrap(), *perfect.specificity.last().unwrap()), (1.0, 0.0));
        let mixed = roc_curve(&s, &[true, false, true, false]).unwrap();
        assert!((auc(&mixed) - 75.0).abs() < 1e-12);
        assert!(matches!(roc_curve(&s, &[true; 4]), Err(Error::SingleClass)));
        assert!(roc_curve(&[f64::NAN, 0.1], &[true, false]).is_err());
        assert!(roc_curve(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn curve_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<f64> = (0..500).map(|_| (rng.gen_range(0.0..1.0f64) * 20.0).round()).collect();
        let l: Vec<bool> = (0..500).map(|_| rng.gen_bool(0.3)).collect();
        let c = roc_curve(&s, &l).unwrap();
        assert!(c.sensitivity.windows(2).all(|w| w[1] >= w[0]));
        assert!(c.specificity.windows(2).all(|w| w[1] <= w[0]));
        assert!(c.thresholds.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn chance_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<f64> = (0..10000).map(|_| rng.gen()).collect();
        let l: Vec<bool> = (0..10000).map(|_| rng.gen_bool(0.5)).collect();
        let c = roc_curve(&s, &l).unwrap();
        assert!((auc(&c) - 50.0).abs() < 2.0);
        assert!((auc90(&c) - 5.0).abs() < 0.5);
    }

    #[test]
    fn diagonal_gives_five() {
        let c = RocCurve {
            thresholds: vec![f64::INFINITY, f64::NEG_INFINITY],
            sensitivity: vec![0.0, 1.0],
            specificity: vec![1.0, 0.0],
            positives: 1,
            negatives: 1,
        };
        assert!((auc90(&c) - 5.0).abs() < 1e-12);
        assert!((auc(&c) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn relative_improvement_examples() {
        let r = relative_improvement(98.5, 96.6).unwrap();
        assert!((r - 55.88).abs() < 0.01);
        assert_eq!(r.round(), 56.0);
        assert_eq!(relative_improvement(90.0, 90.0).unwrap(), 0.0);
        assert_eq!(relative_improvement(100.0, 80.0).unwrap(), 100.0);
        assert!(relative_improvement(99.0, 100.0).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let a = SubjectScores { subject: "a".into(), scores: vec![0.9, 0.8, 0.4, 0.2], labels: vec![true, false, true, false] };
        let quiet = SubjectScores { subject: "q".into(), scores: vec![0.1, 0.3], labels: vec![false, false] };
        let one = aggregate(&[a.clone()], AggregateMode::MeanPerSubject).unwrap();
        assert!((one.auc_mean - 75.0).abs() < 1e-12);
        assert_eq!(one.auc_std, 0.0);
        let with_quiet = aggregate(&[a.clone(), quiet.clone()], AggregateMode::MeanPerSubject).unwrap();
        assert_eq!(with_quiet.excluded, vec!["q".to_string()]);
        assert_eq!(with_quiet.n_subjects, 1);
        let cat = aggregate(&[a.clone(), a.clone()], AggregateMode::Concatenated).unwrap();
        assert!((cat.auc_mean - one.auc_mean).abs() < 1e-12);
        assert!(aggregate(&[a.clone(), quiet.clone()], AggregateMode::Concatenated).is_ok());
        assert!(matches!(aggregate(&[quiet], AggregateMode::MeanPerSubject), Err(Error::SingleClass)));
        assert!(aggregate(&[], AggregateMode::Concatenated).is_err());

        let b = SubjectScores { subject: "b".into(), scores: vec![0.9, 0.8, 0.4, 0.2], labels: vec![true, true, false, false] };
        let two = aggregate(&[a, b], AggregateMode::MeanPerSubject).unwrap();
        assert!((two.auc_mean - 87.5).abs() < 1e-12);
        assert!((two.auc_std - (2.0f64 * 12.5 * 12.5).sqrt()).abs() < 1e-9);
        let csv = summary_to_csv(&[("fcn".into(), two)]);
        assert!(csv.lines().nth(1).unwrap().starts_with("fcn,mean,87.50,17.68"));
    }

    #[test]
    fn roc_csv_has_sentinels() {
        let c = roc_curve(&[0.5, 0.25], &[true, false]).unwrap();
        let text = roc_to_csv(&c);
        assert_eq!(text.lines().nth(1).unwrap(), "inf,0.000000,1.000000");
        assert_eq!(text.lines().last().unwrap(), "-inf,1.000000,0.000000");
    }

    fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..120).prop_flat_map(|n| {
            (prop::collection::vec(0u8..10, n), prop::collection::vec(any::<bool>(), n))
                .prop_filter("two classes", |(_, l)| l.iter().any(|&x| x) && l.iter().any(|&x| !x))
                .prop_map(|(s, l)| (s.into_iter().map(|v| v as f64 / 10.0).collect(), l))
        })
    }

    proptest! {
        #[test]
        fn trapezoid_equals_pair_count((s, l) in scored()) {
            let c = roc_curve(&s, &l).unwrap();
            prop_assert!((auc(&c) - pair_auc(&s, &l)).abs() < 1e-9);
        }

        #[test]
        fn reversal_and_bounds((s, l) in scored()) {
            let c = roc_curve(&s, &l).unwrap();
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let r = roc_curve(&neg, &l).unwrap();
            prop_assert!((auc(&r) - (100.0 - auc(&c))).abs() < 1e-9);
            let a90 = auc90(&c);
            prop_assert!(a90 <= 100.0 + 1e-12 && a90 >= 0.0 && a90 <= auc(&c) + 10.0);
        }

        #[test]
        fn monotone_transform_and_permutation((s, l) in scored(), seed in any::<u64>()) {
            let base = roc_curve(&s, &l).unwrap();
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert!((auc(&roc_curve(&t, &l).unwrap()) - auc(&base)).abs() < 1e-9);
            let mut idx: Vec<usize> = (0..s.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
            let ps: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
            let pl: Vec<bool> = idx.iter().map(|&i| l[i]).collect();
            prop_assert_eq!(roc_curve(&ps, &pl).unwrap(), base);
        }
    }
}
