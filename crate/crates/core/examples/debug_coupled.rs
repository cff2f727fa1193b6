// scratch: coupled waveform-only optimum quality at the fig3/fig4 points
use cloudradar::cf_opt::*;
use cloudradar::detect::*;
use cloudradar::linalg::{from_real_vec, to_real_vec};
use cloudradar::metrics::*;
use cloudradar::model::*;
use nalgebra::DVector;

fn fit_q(s: &Scenario, x: &Waveform) -> QuantCovSet {
    let eps: Vec<f64> = (0..s.n_sensors).map(|n| epsilon_for_rate(s, x, n).unwrap()).collect();
    QuantCovSet::isotropic(&eps, s.code_len)
}

fn g_of(s: &Scenario, x: &Waveform) -> f64 {
    cf_bhattacharyya(s, x, &fit_q(s, x)).unwrap().total_nats
}

fn project(xi: &DVector<f64>, p_t: f64) -> DVector<f64> {
    let n2 = xi.norm_squared();
    if n2 <= p_t { xi.clone() } else { xi.scale((p_t / n2).sqrt()) }
}

fn ascend(s: &Scenario, x0: &Waveform) -> Waveform {
    let mut xi = to_real_vec(&x0.x);
    let mut step = 0.1;
    for _ in 0..400 {
        let h = 1e-5;
        let base = g_of(s, &Waveform::new(from_real_vec(&xi)));
        let mut grad = DVector::zeros(xi.len());
        for i in 0..xi.len() {
            let mut p = xi.clone();
            p[i] += h;
            grad[i] = (g_of(s, &Waveform::new(from_real_vec(&p))) - base) / h;
        }
        let mut improved = false;
        for _ in 0..25 {
            let trial = project(&(&xi + grad.scale(step)), s.p_t);
            if g_of(s, &Waveform::new(from_real_vec(&trial))) > base + 1e-12 {
                xi = trial; improved = true; step *= 1.3; break;
            }
            step *= 0.4;
        }
        if !improved || step < 1e-11 { break; }
    }
    Waveform::new(from_real_vec(&xi))
}

fn main() {
    let opts = cloudradar::experiment::campaign_options(1e-7);
    for cap_nats in [5.0_f64, 8.0] {
        let bits = cap_nats / std::f64::consts::LN_2;
        let s = paper_scenario(ScenarioName::CfFig234).with_backhaul_bits(bits);
        let (xw, _) = cf_baselines(&s, CfBaseline::WaveformOpt, &opts).unwrap();
        let t = std::time::Instant::now();
        let xc = ascend(&s, &xw);
        let xc2 = ascend(&s, &barker13(s.p_t));
        let (xbest, label) = if g_of(&s, &xc) >= g_of(&s, &xc2) { (xc, "from free") } else { (xc2, "from barker") };
        let q = fit_q(&s, &xbest);
        let b = cf_bhattacharyya(&s, &xbest, &q).unwrap().total_nats;
        let design = Design::Cf { x: &xbest, q: &q };
        let d = build_detector(&s, design).unwrap();
        let cal = calibrate_threshold(&d, &s, design, 0.01, 200_000, 900).unwrap();
        let d = d.with_threshold(cal.nu);
        let pd = estimate_pd(&d, &s, design, 50_000, 901).unwrap();
        println!("C={cap_nats} nats: coupled waveform-opt ({label}) B={b:.4} Pd={:.4}  ({:?})", pd.value, t.elapsed());
    }
}
