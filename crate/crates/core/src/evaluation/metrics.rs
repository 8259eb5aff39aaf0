use crate::error::{ensure, Error, Result};
use crate::numcore::Real;

/// Arithmetic mean; every fold mean in a report goes through here.
pub fn mean(values: &[Real]) -> Result<Real> {
    ensure!(!values.is_empty(), "mean of an empty list");
    Ok(values.iter().sum::<Real>() / values.len() as Real)
}

fn check_pairs(predictions: &[usize], golds: &[usize]) -> Result<()> {
    ensure!(
        predictions.len() == golds.len(),
        "{} predictions for {} gold labels",
        predictions.len(),
        golds.len()
    );
    ensure!(!golds.is_empty(), "no predictions to score");
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy(predictions: &[usize], golds: &[usize]) -> Result<Real> {
    check_pairs(predictions, golds)?;
    let hits = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as Real / golds.len() as Real)
}

/// `1 - accuracy`, so the two always add up to exactly one.
pub fn error_rate(predictions: &[usize], golds: &[usize]) -> Result<Real> {
    Ok(1.0 - accuracy(predictions, golds)?)
}

/// Root mean squared difference of 1-based sentiment scores. Only defined for
/// fine-grained corpora.
pub fn rmse(predictions: &[usize], golds: &[usize], num_classes: usize) -> Result<Real> {
    ensure!(
        num_classes > 2,
        "rmse needs fine-grained labels, got a {num_classes}-class corpus"
    );
    check_pairs(predictions, golds)?;
    let in_range = |s: &usize| (1..=num_classes).contains(s);
    ensure!(
        predictions.iter().all(in_range) && golds.iter().all(in_range),
        "scores must lie in 1..={num_classes}"
    );
    let sq: Real = predictions
        .iter()
        .zip(golds)
        .map(|(&p, &g)| {
            let d = p as Real - g as Real;
            d * d
        })
        .sum();
    Ok((sq / golds.len() as Real).sqrt())
}

/// Class index to 1-based score.
pub fn class_to_score(class: usize) -> usize {
    class + 1
}

/// Out-channel minus in-channel error, in percentage points. Snapped to 1e-9
/// points so that error fractions written in decimal give their decimal
/// difference.
pub fn transfer_loss(e_oc: Real, e_ic: Real) -> Real {
    let points = 100.0 * e_oc - 100.0 * e_ic;
    (points * 1e9).round() / 1e9
}

/// Mean over datasets of transfer error divided by in-channel baseline error.
pub fn transfer_ratio(errors: &[Real], baselines: &[Real]) -> Result<Real> {
    ensure!(
        errors.len() == baselines.len(),
        "{} transfer errors for {} baselines",
        errors.len(),
        baselines.len()
    );
    ensure!(!errors.is_empty(), "transfer ratio needs at least one dataset");
    let mut quotients = Vec::with_capacity(errors.len());
    for (index, (&e, &b)) in errors.iter().zip(baselines).enumerate() {
        if b == 0.0 {
            return Err(Error::ZeroBaselineError { index });
        }
        quotients.push(e / b);
    }
    mean(&quotients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1], &[1, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert!(accuracy(&[0], &[0, 1]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[3, 4], &[3, 4], 5).unwrap(), 0.0);
        assert_eq!(rmse(&[1, 1], &[5, 5], 5).unwrap(), 4.0);
        let r = rmse(&[1, 3], &[2, 5], 5).unwrap();
        assert!((r - 2.5f64.sqrt() as Real).abs() < 1e-12);
        assert_eq!(format!("{r:.4}"), "1.5811");
        assert!(rmse(&[1], &[2], 2).is_err());
        assert!(rmse(&[0], &[2], 5).is_err());
    }

    #[test]
    fn transfer_loss_examples() {
        assert_eq!(transfer_loss(0.300, 0.258), 4.2);
        assert_eq!(transfer_loss(0.2, 0.2), 0.0);
        assert!(transfer_loss(0.1, 0.2) < 0.0);
    }

    #[test]
    fn transfer_ratio_examples() {
        assert_eq!(transfer_ratio(&[0.2, 0.3], &[0.25, 0.25]).unwrap(), 1.0);
        assert_eq!(transfer_ratio(&[0.1, 0.4], &[0.1, 0.4]).unwrap(), 1.0);
        assert!(matches!(
            transfer_ratio(&[0.1, 0.2], &[0.1, 0.0]),
            Err(Error::ZeroBaselineError { index: 1 })
        ));
        assert!(transfer_ratio(&[0.1], &[0.1, 0.2]).is_err());
    }

    proptest! {
        #[test]
        fn identities(e in 0.0..=1.0f64, bs in proptest::collection::vec(1e-6..=1.0f64, 1..8)) {
            let e = e as Real;
            let bs: Vec<Real> = bs.into_iter().map(|b| b as Real).collect();
            prop_assert_eq!(transfer_loss(e, e), 0.0);
            prop_assert_eq!(transfer_ratio(&bs, &bs).unwrap(), 1.0);
        }

        #[test]
        fn accuracy_and_error_sum_to_one(pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..200)) {
            let (p, g): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let a = accuracy(&p, &g).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(a + error_rate(&p, &g).unwrap(), 1.0);
        }
    }
}
