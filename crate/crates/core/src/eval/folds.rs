//! Stratified k-fold assignment over labelled items.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{hash_str, rng_from};
use crate::scene::Label;

/// Splits item indices into `k` folds with near-equal class balance:
/// each class is shuffled independently and dealt round-robin, so fold
/// class counts differ by at most one. Every class must have at least
/// `k` members. Returns the fold index of each item.
pub fn stratified_fold_assignment(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut fold_of = vec![0usize; labels.len()];
    for class in [Label::Human, Label::Autonomous] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::Data(format!(
                "class {class:?} has {} members, cannot fill {k} folds",
                members.len()
            )));
        }
        let mut rng = rng_from(seed, &[hash_str("fold-deal"), u64::from(class.as_bit())]);
        members.shuffle(&mut rng);
        for (pos, item) in members.into_iter().enumerate() {
            fold_of[item] = pos % k;
        }
    }
    Ok(fold_of)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|b| Label::try_from(*b).unwrap()).collect()
    }

    #[test]
    fn folds_partition_and_balance() {
        let l = labels(&[0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1]);
        let fold_of = stratified_fold_assignment(&l, 5, 7).unwrap();
        assert_eq!(fold_of.len(), l.len());
        for k in 0..5 {
            let pos = (0..l.len())
                .filter(|&i| fold_of[i] == k && l[i] == Label::Autonomous)
                .count();
            let neg = (0..l.len())
                .filter(|&i| fold_of[i] == k && l[i] == Label::Human)
                .count();
            // 6 positives and 7 negatives over 5 folds.
            assert!(pos == 1 || pos == 2, "fold {k} has {pos} positives");
            assert!(neg == 1 || neg == 2, "fold {k} has {neg} negatives");
        }
    }

    #[test]
    fn folds_are_deterministic_and_seed_sensitive() {
        let l = labels(&[0, 0, 0, 1, 1, 1, 0, 1, 0, 1]);
        let a = stratified_fold_assignment(&l, 2, 3).unwrap();
        let b = stratified_fold_assignment(&l, 2, 3).unwrap();
        assert_eq!(a, b);
        let differs = (0..100)
            .any(|s| stratified_fold_assignment(&l, 2, s).unwrap() != a);
        assert!(differs);
    }

    #[test]
    fn folds_reject_sparse_classes() {
        let l = labels(&[0, 0, 0, 0, 1]);
        assert!(stratified_fold_assignment(&l, 2, 0).is_err());
        assert!(stratified_fold_assignment(&l, 1, 0).is_err());
    }
}
