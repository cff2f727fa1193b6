// scratch: direct ascent on g(x) = B(x, eps(x) I) — the coupled waveform-only objective
use cloudradar::cf_opt::*;
use cloudradar::linalg::{from_real_vec, to_real_vec};
use cloudradar::metrics::*;
use cloudradar::model::*;
use nalgebra::DVector;

fn g_of(s: &Scenario, x: &Waveform) -> f64 {
    let eps: Vec<f64> = (0..s.n_sensors).map(|n| epsilon_for_rate(s, x, n).unwrap()).collect();
    let q = QuantCovSet::isotropic(&eps, s.code_len);
    cf_bhattacharyya(s, x, &q).unwrap().total_nats
}

fn project(xi: &DVector<f64>, p_t: f64) -> DVector<f64> {
    let n2 = xi.norm_squared();
    if n2 <= p_t { xi.clone() } else { xi.scale((p_t / n2).sqrt()) }
}

fn ascend(s: &Scenario, x0: &Waveform, label: &str) -> (f64, Waveform) {
    let mut xi = to_real_vec(&x0.x);
    let mut best = g_of(s, &Waveform::new(from_real_vec(&xi)));
    let mut step = 0.1;
    for iter in 0..300 {
        // forward-difference gradient
        let h = 1e-5;
        let base = g_of(s, &Waveform::new(from_real_vec(&xi)));
        let mut grad = DVector::zeros(xi.len());
        for i in 0..xi.len() {
            let mut p = xi.clone();
            p[i] += h;
            grad[i] = (g_of(s, &Waveform::new(from_real_vec(&p))) - base) / h;
        }
        let mut improved = false;
        for _ in 0..20 {
            let trial = project(&(&xi + grad.scale(step)), s.p_t);
            let val = g_of(s, &Waveform::new(from_real_vec(&trial)));
            if val > base + 1e-12 {
                xi = trial;
                best = val;
                improved = true;
                step *= 1.3;
                break;
            }
            step *= 0.4;
        }
        if !improved || step < 1e-10 {
            println!("{label}: stop at iter {iter}");
            break;
        }
    }
    (best, Waveform::new(from_real_vec(&xi)))
}

fn main() {
    let s = paper_scenario(ScenarioName::CfFig234).with_backhaul_bits(5.0);
    let t = std::time::Instant::now();
    let (g_barker, _xb) = ascend(&s, &barker13(s.p_t), "from barker");
    println!("coupled waveform-only optimum from barker: {g_barker:.4}  ({:?})", t.elapsed());
    let opts = cloudradar::experiment::campaign_options(1e-7);
    let (xw, _) = cf_baselines(&s, CfBaseline::WaveformOpt, &opts).unwrap();
    let t = std::time::Instant::now();
    let (g_free, _xf) = ascend(&s, &xw, "from free-opt");
    println!("coupled waveform-only optimum from free-opt: {g_free:.4}  ({:?})", t.elapsed());
}
