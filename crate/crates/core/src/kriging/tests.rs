use super::*;
use std::f64::consts::PI;

fn set(x: &[f64], y: &[f64]) -> TrainingSet {
    TrainingSet::new(x.iter().map(|v| vec![*v]).collect(), y.to_vec()).unwrap()
}

#[test]
fn correlation_basics() {
    assert_eq!(correlation(&[2.0, 3.0], &[0.1, 0.2], &[0.1, 0.2]).unwrap(), 1.0);
    let c = correlation(&[1.0], &[0.0], &[1.0]).unwrap();
    assert!((c - (-1.0f64).exp()).abs() < 1e-15);
    assert!((c - 0.367879).abs() < 1e-6);
    let mut last = 1.0;
    for t in [0.1, 1.0, 10.0, 100.0] {
        let c = correlation(&[t], &[0.2], &[0.6]).unwrap();
        assert!(c < last);
        last = c;
    }
    assert!(matches!(
        correlation(&[1.0], &[0.0, 1.0], &[1.0]),
        Err(KrigingError::Dimension { .. })
    ));
    assert!(matches!(
        correlation(&[0.0], &[0.0], &[1.0]),
        Err(KrigingError::InvalidTheta(_))
    ));
}

#[test]
fn training_set_validation() {
    assert_eq!(TrainingSet::new(vec![], vec![]), Err(KrigingError::Empty));
    assert!(matches!(
        TrainingSet::new(vec![vec![1.2]], vec![0.0]),
        Err(KrigingError::OutsideUnitCube { row: 0, col: 0, .. })
    ));
    assert_eq!(
        TrainingSet::new(vec![vec![0.5], vec![0.5 + 1e-13]], vec![0.0, 1.0]),
        Err(KrigingError::DuplicatePoint { first: 0, second: 1 })
    );
    assert!(TrainingSet::new(vec![vec![0.5], vec![0.5 + 1e-9]], vec![0.0, 1.0]).is_ok());
    assert!(matches!(
        TrainingSet::new(vec![vec![0.5]], vec![f64::NAN]),
        Err(KrigingError::NonFinite { row: 0 })
    ));
}

#[test]
fn likelihood_two_point_closed_form() {
    let t = set(&[0.0, 1.0], &[0.0, 1.0]);
    let l = neg_loglik(&[1.0], &t, 0.0).unwrap();
    let c = (-1.0f64).exp();
    let sigma2 = 1.0 / (4.0 * (1.0 - c));
    let expected = 0.5 * (2.0 * sigma2.ln() + (1.0 - c * c).ln());
    assert!((l.beta_hat - 0.5).abs() < 1e-14);
    assert!((l.sigma2_hat - sigma2).abs() < 1e-14);
    assert!((l.value - expected).abs() < 1e-12);
}

#[test]
fn identity_correlation_limit() {
    let t = set(&[0.0, 0.5, 1.0], &[1.0, 4.0, -2.0]);
    let l = neg_loglik(&[1e4], &t, 0.0).unwrap();
    let mean = 1.0;
    let var = ((0.0f64).powi(2) + 9.0 + 9.0) / 3.0;
    assert!((l.beta_hat - mean).abs() < 1e-12);
    assert!((l.sigma2_hat - var).abs() < 1e-12);
    assert!((l.value - 0.5 * 3.0 * var.ln()).abs() < 1e-12);
}

#[test]
fn constant_response_has_zero_variance() {
    let t = set(&[0.1, 0.4, 0.9], &[3.2, 3.2, 3.2]);
    for theta in [0.5, 5.0, 50.0] {
        let l = neg_loglik(&[theta], &t, 0.0).unwrap();
        assert!(l.sigma2_hat < 1e-28, "{}", l.sigma2_hat);
        assert!(l.value.is_finite());
    }
    let m = fit(t, &FitConfig::default()).unwrap();
    for x in [0.0, 0.25, 0.77, 1.0] {
        let p = m.predict(&[x]).unwrap();
        assert!((p.mean - 3.2).abs() < 1e-12);
        assert!(p.sd < 1e-12);
    }
}

#[test]
fn single_point_predicts_its_value_everywhere() {
    let m = fit(set(&[0.4], &[-1.7]), &FitConfig::default()).unwrap();
    for x in [0.0, 0.4, 1.0] {
        assert!((m.predict(&[x]).unwrap().mean + 1.7).abs() < 1e-12);
    }
}

#[test]
fn interpolates_sine_samples() {
    let xs = [0.05, 0.27, 0.5, 0.71, 0.93];
    let ys: Vec<f64> = xs.iter().map(|x| (2.0 * PI * x).sin()).collect();
    let m = fit(set(&xs, &ys), &FitConfig::default().with_nugget(0.0)).unwrap();
    let range = m.training().y_range();
    for (x, y) in xs.iter().zip(&ys) {
        let p = m.predict(&[*x]).unwrap();
        assert!((p.mean - y).abs() <= 1e-6 * range, "{} vs {}", p.mean, y);
        assert!(p.sd <= 1e-6 * m.sigma2_hat().sqrt());
    }
}

#[test]
fn symmetric_pair_midpoint() {
    let m = KrigingModel::with_theta(set(&[0.0, 1.0], &[0.0, 1.0]), &[2.0], 0.0).unwrap();
    assert!((m.predict(&[0.5]).unwrap().mean - 0.5).abs() < 1e-14);
    let mid = m.predict(&[0.5]).unwrap().sd;
    assert!(mid > m.predict(&[0.0]).unwrap().sd);
}

#[test]
fn far_field_reverts_to_trend() {
    let m = KrigingModel::with_theta(set(&[0.0, 0.1, 0.2], &[1.0, 2.0, 0.5]), &[1000.0], 0.0).unwrap();
    let p = m.predict(&[1.0]).unwrap();
    assert!((p.mean - m.beta_hat()).abs() < 1e-12);
    let expected = (m.sigma2_hat() * (1.0 + 1.0 / m.trend_precision())).sqrt();
    assert!((p.sd - expected).abs() < 1e-10 * expected);
    let simple = m
        .clone()
        .with_variance_form(VarianceForm::Simple)
        .predict(&[1.0])
        .unwrap();
    assert!((simple.sd - m.sigma2_hat().sqrt()).abs() < 1e-10);
}

#[test]
fn predict_checks_dimension() {
    let m = fit(set(&[0.2, 0.8], &[1.0, 0.0]), &FitConfig::default()).unwrap();
    assert!(matches!(m.predict(&[0.1, 0.2]), Err(KrigingError::Dimension { .. })));
}

#[test]
fn snapshot_round_trip() {
    let xs = vec![vec![0.1, 0.9], vec![0.4, 0.3], vec![0.8, 0.6], vec![0.2, 0.2]];
    let ys = vec![1.0, -0.5, 2.0, 0.3];
    let m = fit(TrainingSet::new(xs, ys).unwrap(), &FitConfig::default()).unwrap();
    let json = serde_json::to_string(&m.snapshot()).unwrap();
    assert!(json.contains("\"X\""));
    let back = KrigingModel::from_snapshot(&serde_json::from_str(&json).unwrap()).unwrap();
    for x in [[0.5, 0.5], [0.0, 1.0], [0.33, 0.71]] {
        let (a, b) = (m.predict(&x).unwrap(), back.predict(&x).unwrap());
        assert!((a.mean - b.mean).abs() <= 1e-12 && (a.sd - b.sd).abs() <= 1e-12);
    }
}

#[test]
fn fit_is_deterministic_per_seed() {
    let xs: Vec<Vec<f64>> = crate::sampling::lhs_sample(12, 2, 4);
    let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin() + x[1] * x[1]).collect();
    let t = TrainingSet::new(xs, ys).unwrap();
    let a = fit(t.clone(), &FitConfig::default().with_seed(9)).unwrap();
    let b = fit(t, &FitConfig::default().with_seed(9)).unwrap();
    assert_eq!(a.theta(), b.theta());
    assert!(a.theta().iter().all(|t| *t > 0.0));
}
