fn main() {
    let report = mbreg::oracle::grid_agreement_report().unwrap();
    println!("points: {}", report.points.len());
    println!("strict failures: {}", report.strict_margin_failures.len());
    let bad: Vec<_> = report.mismatches().collect();
    println!("mismatches: {}", bad.len());
    for p in bad.iter().take(12) {
        println!(
            "  {:?} d={} D={} g={} tr={} | max_b f={} e={} | replies f={:?} e={:?}",
            p.model, p.input.delta, p.input.big_delta, p.input.gamma, p.input.t_r,
            p.formula_max_b, p.enumerated_max_b, p.formula_replies, p.enumerated_replies
        );
    }
}
