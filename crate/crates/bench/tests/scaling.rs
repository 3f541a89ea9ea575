use zklora_bench::{run_scaling_bench, BenchSpec, Regime};

#[test]
fn doubling_modules_roughly_doubles_total_verify() {
    let regimes = vec![
        Regime { regime_id: 0, num_modules: 6, n: 256, d: 256, r: 8 },
        Regime { regime_id: 1, num_modules: 12, n: 256, d: 256, r: 8 },
    ];
    let spec = BenchSpec { repetitions: 5, seed: 3, ..BenchSpec::new(regimes) };
    let out = run_scaling_bench(&spec).unwrap();
    assert_eq!(out.rows.len(), 2);
    // per-repetition totals; the median damps scheduler noise
    let total = |id: u32| {
        let mut per_rep: Vec<f64> = (0..spec.repetitions)
            .map(|rep| out.modules.iter().filter(|t| t.regime_id == id && t.repetition == rep).map(|t| t.verify_ms).sum())
            .collect();
        per_rep.sort_by(f64::total_cmp);
        per_rep[per_rep.len() / 2]
    };
    let ratio = total(1) / total(0);
    assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
}
