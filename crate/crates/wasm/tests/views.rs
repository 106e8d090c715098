use birkhoff_lax_wasm::{classify_view, residual_scan, simulate_kt_view};

#[test]
fn simulation_conserves_the_integrals() {
    let view = simulate_kt_view(4, 1, 10.0, 100).unwrap();
    assert!(view.completed);
    assert!(view.times.len() <= 101);
    assert_eq!(view.times.last().copied(), Some(10.0));
    assert_eq!(view.integral_names.len(), 4);
    let worst = view.drift.iter().flatten().fold(0.0_f64, |m, d| m.max(*d));
    assert!(worst < 1e-8, "drift {worst}");
}

#[test]
fn simulation_rejects_bad_input() {
    assert!(simulate_kt_view(3, 1, 10.0, 100).is_err());
    assert!(simulate_kt_view(4, 1, -1.0, 100).is_err());
}

#[test]
fn classify_reports_the_kt_diagram() {
    let view = classify_view("[[1,-1,0,0],[0,1,-1,0],[0,0,1,-1],[0,0,1,1],[-1,0,0,0],[-2,0,0,0]]").unwrap();
    assert!(view.pass);
    let mut w = view.weights.clone();
    w.sort_unstable();
    assert_eq!(w, vec![1, 2, 2, 2, 2, 4]);
    assert_eq!(view.edges.iter().filter(|e| e.multiplicity == 4).count(), 1);
}

#[test]
fn classify_flags_violations_and_bad_json() {
    let view = classify_view("[[1,0],[0,1],[-2,-1]]").unwrap();
    assert!(!view.pass);
    assert!(!view.violations.is_empty());
    assert!(view.diagram_error.is_some());
    assert!(classify_view("[[1,0],[0]]").is_err());
    assert!(classify_view("not json").is_err());
}

#[test]
fn residual_scan_separates_the_variants() {
    let scan = residual_scan(5, 2, 0.0, 1.5, 16).unwrap();
    assert_eq!(scan.coupling.len(), 16);
    assert!(scan.corrected.iter().all(|r| *r < 1e-10));
    assert!(scan.printed[0] < 1e-12);
    assert!(scan.printed[15] > 1e-3);
    assert!(residual_scan(5, 2, 1.0, 0.0, 16).is_err());
}
