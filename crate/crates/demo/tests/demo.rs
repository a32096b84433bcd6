use densratio_demo::{compare, divergences, true_grid};

#[test]
fn grid_peaks_at_the_label_mean() {
    let g = true_grid(4, 6.0, 0, 8.0, 33).unwrap();
    assert_eq!(g.len(), 33 * 33);
    let argmax = (0..g.len()).max_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap();
    // label 0 sits at (6, 0): right half, middle row
    assert_eq!(argmax / 33, 16);
    assert!(argmax % 33 > 16);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(true_grid(4, 6.0, 9, 8.0, 10).is_err());
    assert!(compare("nope", 4, 6.0, 10, 0, 0, 8.0, 8).is_err());
    assert!(divergences(&[]).is_err());
    assert!(divergences(&[1.0, f64::NAN]).is_err());
}

#[test]
fn short_training_produces_full_maps() {
    let c = compare("clip", 4, 6.0, 30, 1, 2, 8.0, 8).unwrap();
    assert_eq!(c.truth.len(), 64);
    assert_eq!(c.predicted.len(), 64);
    assert_eq!(c.losses.len(), 30);
    assert!(c.predicted.iter().all(|p| p.is_finite() && *p > 0.0));
}

#[test]
fn divergences_of_two_scores() {
    let [fwd, rev] = divergences(&[0.0, 3f64.ln()]).unwrap();
    assert!((fwd - (0.75 * 3f64.ln() - 2f64.ln())).abs() < 1e-12);
    assert!((rev - (2f64.ln() - 0.5 * 3f64.ln())).abs() < 1e-12);
}
