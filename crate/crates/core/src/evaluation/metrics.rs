//! Threshold metrics and the rank-based AUC. Fake is the positive class and
//! a score exactly at the threshold counts as a Fake decision.

use super::EvalError;
use crate::dataset::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_scores(scores: &[(f64, Label)], threshold: f64) -> Self {
        let mut c = Self::default();
        for &(s, label) in scores {
            match (s >= threshold, label) {
                (true, Label::Fake) => c.tp += 1,
                (true, Label::Real) => c.fp += 1,
                (false, Label::Real) => c.tn += 1,
                (false, Label::Fake) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// Harmonic mean of precision and recall, computed as
    /// `2·TP / (2·TP + FP + FN)`; zero when there are no true positives.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        (2 * self.tp) as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }
}

pub fn accuracy(scores: &[(f64, Label)], threshold: f64) -> Result<f64, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(Confusion::from_scores(scores, threshold).accuracy())
}

pub fn f1(scores: &[(f64, Label)], threshold: f64) -> Result<f64, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(Confusion::from_scores(scores, threshold).f1())
}

/// Mann–Whitney statistic: the fraction of (real, fake) pairs where the fake
/// scores higher, with ties worth one half. O(n log n).
pub fn auc(scores: &[(f64, Label)]) -> Result<f64, EvalError> {
    let n_fake = scores.iter().filter(|(_, l)| l.is_fake()).count();
    let n_real = scores.len() - n_fake;
    if n_fake == 0 || n_real == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut sorted: Vec<(f64, Label)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // twice the U statistic, kept integral until the final division
    let mut u2: u128 = 0;
    let mut reals_below: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut r, mut f) = (0u128, 0u128);
        while j < sorted.len() && sorted[j].0.total_cmp(&sorted[i].0).is_eq() {
            if sorted[j].1.is_fake() {
                f += 1;
            } else {
                r += 1;
            }
            j += 1;
        }
        u2 += f * (2 * reals_below + r);
        reals_below += r;
        i = j;
    }
    Ok(u2 as f64 / (2.0 * n_real as f64 * n_fake as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake, Real};

    #[test]
    fn hand_examples() {
        assert_eq!(accuracy(&[(0.9, Fake), (0.1, Real)], 0.5).unwrap(), 1.0);
        let ties = [(0.5, Fake), (0.5, Real), (0.5, Real), (0.5, Fake)];
        assert_eq!(accuracy(&ties, 0.5).unwrap(), 0.5);
        assert_eq!(auc(&ties).unwrap(), 0.5);
        assert_eq!(auc(&[(0.2, Real), (0.3, Real), (0.8, Fake)]).unwrap(), 1.0);
        assert!(matches!(accuracy(&[], 0.5), Err(EvalError::EmptyInput)));
        assert!(matches!(auc(&[(0.1, Fake)]), Err(EvalError::SingleClass)));
    }

    #[test]
    fn f1_cases() {
        let c = Confusion {
            tp: 8,
            fp: 2,
            tn: 0,
            fn_: 2,
        };
        assert_eq!(c.f1(), 0.8);
        assert_eq!(f1(&[(0.1, Fake), (0.2, Real)], 0.5).unwrap(), 0.0);
        assert_eq!(f1(&[(0.9, Fake), (0.2, Real)], 0.5).unwrap(), 1.0);
    }

    #[test]
    fn auc_is_rank_invariant() {
        let s: [(f64, Label); 5] = [
            (0.1, Real),
            (0.4, Fake),
            (0.35, Real),
            (0.8, Fake),
            (0.4, Real),
        ];
        let t: Vec<_> = s.iter().map(|&(x, l)| ((5.0 * x).exp(), l)).collect();
        assert_eq!(auc(&s).unwrap(), auc(&t).unwrap());
    }
}
