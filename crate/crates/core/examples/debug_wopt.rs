// scratch: waveform_opt epsilon conventions + free-optimum restarts
use cloudradar::cf_opt::*;
use cloudradar::detect::*;
use cloudradar::experiment::campaign_options;
use cloudradar::metrics::*;
use cloudradar::model::*;
use cloudradar::linalg::C64;
use nalgebra::DVector;
use rand::Rng;

fn main() {
    let s = paper_scenario(ScenarioName::CfFig234).with_backhaul_bits(5.0);
    let opts = campaign_options(1e-7);
    let b_of = |x: &Waveform, q: &QuantCovSet| cf_bhattacharyya(&s, x, q).unwrap().total_nats;
    let pd_of = |label: &str, x: &Waveform, q: &QuantCovSet, seed: u64| {
        let design = Design::Cf { x, q };
        let d = build_detector(&s, design).unwrap();
        let cal = calibrate_threshold(&d, &s, design, 0.01, 200_000, seed).unwrap();
        let d = d.with_threshold(cal.nu);
        let pd = estimate_pd(&d, &s, design, 50_000, seed + 1).unwrap();
        println!("{label}: B={:.4} Pd={:.4}", b_of(x, q), pd.value);
        pd.value
    };

    // epsilon fitted at Barker (the no-opt constant).
    let barker = barker13(s.p_t);
    let eps_barker: Vec<f64> = (0..3).map(|n| epsilon_for_rate(&s, &barker, n).unwrap()).collect();
    println!("eps at barker: {eps_barker:?}");

    let (xw, _qw) = cf_baselines(&s, CfBaseline::WaveformOpt, &opts).unwrap();
    let eps_xw: Vec<f64> = (0..3).map(|n| epsilon_for_rate(&s, &xw, n).unwrap()).collect();
    println!("eps at x*:     {eps_xw:?}");

    let q_barker_eps = QuantCovSet::isotropic(&eps_barker, s.code_len);
    for n in 0..3 {
        let r = cf_backhaul_rate_bits(&s, &xw, &q_barker_eps.covs[n], n).unwrap();
        println!("rate of x* under barker-eps, sensor {n}: {r:.3} bits (cap 5)");
    }
    pd_of("waveform_opt [eps at x*]    ", &xw, &QuantCovSet::isotropic(&eps_xw, s.code_len), 500);
    pd_of("waveform_opt [eps at barker]", &xw, &q_barker_eps, 600);

    // Random restarts of the free-waveform problem.
    let mut rng = cloudradar::rng::stream(77);
    let mut best = (b_of(&xw, &QuantCovSet::zeros(3, 13)), xw.clone());
    println!("free-opt from barker: B_free = {:.4}", best.0);
    for t in 0..6 {
        let mut xv = DVector::from_fn(13, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        xv *= C64::new(s.p_t.sqrt() / xv.norm(), 0.0);
        if let Ok((x, q)) = cf_baselines_with_free_start(&s, Waveform::new(xv), &opts) {
            let bf = b_of(&x, &QuantCovSet::zeros(3, 13));
            println!("restart {t}: B_free = {bf:.4}");
            if bf > best.0 { best = (bf, x); let _ = q; }
        }
    }
    println!("best free B = {:.4}", best.0);
}

fn cf_baselines_with_free_start(
    s: &Scenario,
    x0: Waveform,
    opts: &cloudradar::trace::OptOptions,
) -> Result<(Waveform, QuantCovSet), Box<dyn std::error::Error>> {
    use cloudradar::convex::solve_qcqp;
    let q0 = QuantCovSet::zeros(s.n_sensors, s.code_len);
    let mut x = x0;
    let mut obj = -cf_bhattacharyya(s, &x, &q0)?.total_nats;
    for _ in 0..80 {
        let bound = build_waveform_bound_cf_unconstrained(s, &x, &q0)?;
        let qcqp = bound.to_qcqp(s.p_t, None);
        let rep = solve_qcqp(&qcqp, opts.solver_tol, Some(&x.x))?;
        let cand = Waveform::new(rep.solution);
        let cobj = -cf_bhattacharyya(s, &cand, &q0)?.total_nats;
        if cobj <= obj { x = cand; obj = cobj; }
    }
    Ok((x, q0))
}
