// scratch: test the cap-in-nats hypothesis for the published detection values
use cloudradar::cf_opt::*;
use cloudradar::detect::*;
use cloudradar::experiment::campaign_options;
use cloudradar::metrics::*;
use cloudradar::model::*;

fn main() {
    for cap_bits in [5.0 / std::f64::consts::LN_2, 5.0] {
        println!("=== cap {:.4} bits ===", cap_bits);
        let s = paper_scenario(ScenarioName::CfFig234).with_backhaul_bits(cap_bits);
        let opts = campaign_options(1e-7);
        let eval = |label: &str, x: &Waveform, q: &QuantCovSet, seed: u64| -> f64 {
            let b = cf_bhattacharyya(&s, x, q).unwrap().total_nats;
            let design = Design::Cf { x, q };
            let d = build_detector(&s, design).unwrap();
            let cal = calibrate_threshold(&d, &s, design, 0.01, 100_000, seed).unwrap();
            let d = d.with_threshold(cal.nu);
            let pd = estimate_pd(&d, &s, design, 50_000, seed + 1).unwrap();
            println!("{label}: B={b:.4} Pd={:.4}", pd.value);
            pd.value
        };
        let (xn, qn) = cf_baselines(&s, CfBaseline::NoOpt, &opts).unwrap();
        eval("no_opt      ", &xn, &qn, 100);
        let (xw, qw) = cf_baselines(&s, CfBaseline::WaveformOpt, &opts).unwrap();
        eval("waveform_opt", &xw, &qw, 200);
        let (xq, qq) = cf_baselines(&s, CfBaseline::QuantOpt, &opts).unwrap();
        eval("quant_opt   ", &xq, &qq, 300);
        let (xj, qj, _) = optimize_cf(&s, Some((xq.clone(), qq.clone())), &opts).unwrap();
        eval("joint(warmq)", &xj, &qj, 400);
        if (cap_bits - 5.0).abs() > 0.1 { // also distributed for context
            let (pfa, pd) = distributed_detect(&s, &barker13(s.p_t), 0.01, 100_000, 31).unwrap();
            println!("distributed : Pfa={:.4} Pd={:.4}", pfa.value, pd.value);
        }
    }
}
