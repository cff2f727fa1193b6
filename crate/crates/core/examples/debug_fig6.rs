// scratch: short-vs-long gap at P_T = 10 dB
use cloudradar::af_opt::*;
use cloudradar::experiment::campaign_options;
use cloudradar::metrics::*;
use cloudradar::model::*;
use cloudradar::rng::{shard_seed, stream};

fn main() {
    let s = paper_scenario(ScenarioName::AfFig68).with_p_t_db(10.0);
    let opts = campaign_options(1e-7);
    let t = std::time::Instant::now();

    // Long-term design first; short-term refines it per draw.
    let (xl, pl, _) = optimize_af_long(&s, None, AfMode::Joint, &opts, 777).unwrap();
    let draw_opts = cloudradar::trace::OptOptions { outer_max_iters: 4, inner_max_iters: 12, ..opts.clone() };
    let n_draws = 200;
    let mut sum_short = 0.0;
    for l in 0..n_draws {
        let f = sample_channel(&s, &mut stream(shard_seed(4242, l)));
        let (x, p, _) = optimize_af_short(&s, &f, Some((xl.clone(), pl.clone())), AfMode::Joint, &draw_opts).unwrap();
        sum_short += af_bhattacharyya(&s, &x, &p, &f).unwrap();
    }
    let short_mean = sum_short / n_draws as f64;
    println!("short mean over {n_draws} draws: {short_mean:.4}  ({:?})", t.elapsed());

    let t = std::time::Instant::now();
    let mut sum_long = 0.0;
    for l in 0..n_draws {
        let f = sample_channel(&s, &mut stream(shard_seed(4242, l)));
        sum_long += af_bhattacharyya(&s, &xl, &pl, &f).unwrap();
    }
    let long_mean = sum_long / n_draws as f64;
    println!("long mean: {long_mean:.4}  ({:?})", t.elapsed());
    println!("ratio long/short = {:.3} (need > 0.5 and < 1.0)", long_mean / short_mean);
}
