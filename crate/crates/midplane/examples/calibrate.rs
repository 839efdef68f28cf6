use midplane::synth::*;
use midplane::*;

fn main() {
    let templates = default_templates(Side::Right);
    let config = FitConfig::default();

    // How does the normal-subject severity statistic scale with noise?
    println!("== unmorphed noisy subject mean-T by sd ==");
    for sd in [3.0, 1.7320508, 1.2, 1.0, 0.8, 0.6, 0.5] {
        let null_template = vec![DeformitySpec {
            kind: DeformityKind::HorizontalCondylarHyperplasia,
            side: Side::Right,
            magnitude_mm: 0.0,
            affected: vec![],
        }];
        let mut means = Vec::new();
        for seed in 0..6 {
            let cases = generate_cases(3, &null_template, sd, seed).unwrap();
            for c in &cases {
                means.push(t_scores(&c.deformed).unwrap().mean());
            }
        }
        let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("sd {sd:.2}: mean-T in [{lo:.4}, {hi:.4}]");
    }

    println!("\n== benchmark sweep by sd (10 seeds each, 5 subjects x 4 kinds) ==");
    for sd in [3.0, 1.7320508, 1.2, 1.0, 0.8, 0.6, 0.5] {
        let mut all_pass_count = 0;
        let mut worst = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut per_kind_fail = std::collections::BTreeMap::new();
        let mut drop_quality = Vec::new();
        for seed in 0..10u64 {
            let report = run_benchmark(5, &templates, sd, seed, &config, 8).unwrap();
            if report.all_pass() {
                all_pass_count += 1;
            }
            for r in &report.rows {
                if let Some(m) = r.metrics {
                    worst.0 = worst.0.max(m.theta_degrees);
                    worst.1 = worst.1.max(m.dist_n_mm);
                    worst.2 = worst.2.max(m.dist_u1_mm);
                    worst.3 = worst.3.max(m.dist_pg_mm);
                    if !m.pass {
                        *per_kind_fail.entry(r.kind.to_string()).or_insert(0usize) += 1;
                    }
                }
                // how many of the affected units were dropped?
                let affected_dropped = r
                    .dropped_outliers
                    .iter()
                    .filter(|u| {
                        templates
                            .iter()
                            .find(|t| t.kind == r.kind)
                            .unwrap()
                            .affected
                            .contains(&u.name().to_string())
                    })
                    .count();
                let affected_total = templates
                    .iter()
                    .find(|t| t.kind == r.kind)
                    .unwrap()
                    .affected
                    .len();
                drop_quality.push((affected_dropped, affected_total, r.dropped_outliers.len()));
            }
        }
        let mean_recall: f64 = drop_quality
            .iter()
            .map(|(d, t, _)| *d as f64 / *t as f64)
            .sum::<f64>()
            / drop_quality.len() as f64;
        let mean_extra: f64 = drop_quality
            .iter()
            .map(|(d, _, n)| (n - d) as f64)
            .sum::<f64>()
            / drop_quality.len() as f64;
        println!(
            "sd {sd:.2}: all-pass {all_pass_count}/10, worst theta/N/U1/Pg {:.2}/{:.2}/{:.2}/{:.2}, drop recall {mean_recall:.2}, extra drops {mean_extra:.1}, fails by kind {per_kind_fail:?}",
            worst.0, worst.1, worst.2, worst.3
        );
    }
}
