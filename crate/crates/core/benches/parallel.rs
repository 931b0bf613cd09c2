//! Rayon versus sequential mapping for the two hot paths: per-sample gradients of a
//! training batch and per-day backtest episodes.
//!
//! Build with `--no-default-features` to make `parallel::map` sequential as well.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scalper_core::env::{Action, Env, EnvConfig, EnvState, PreparedDay};
use scalper_core::eval::{backtest, Policy};
use scalper_core::marketdata::{generate_synthetic, Pattern, SyntheticSpec};
use scalper_core::neural::{backward, forward_with_tape, NetConfig, NetworkParams, Upstream};
use scalper_core::parallel;

fn days(n: usize) -> Vec<PreparedDay> {
    let spec = SyntheticSpec { days: n, minutes_per_day: 120, pattern: Some(Pattern::VShape), ..Default::default() };
    PreparedDay::prepare_all(&generate_synthetic(&spec, 1).unwrap(), EnvConfig::default().warmup).unwrap()
}

fn states(day: &PreparedDay, cfg: &EnvConfig, n: usize) -> Vec<EnvState> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut env, first) = Env::reset(day, cfg, None).unwrap();
    let mut out = vec![first];
    while out.len() < n {
        let a = Action { price_idx: rng.random_range(0..cfg.n_price), qty_idx: rng.random_range(0..cfg.n_qty) };
        match env.step(a).unwrap().next_state {
            Some(s) => out.push(s),
            None => break,
        }
    }
    out
}

fn gradient(params: &NetworkParams, s: &EnvState) -> NetworkParams {
    let (out, tape) = forward_with_tape(params, s).unwrap();
    let mut up = Upstream::zeros(out.q_price.len(), out.q_qty.len());
    up.q_price[0] = 1.0;
    up.q_qty[0] = 1.0;
    up.vol_pred = 1.0;
    backward(params, &tape, &up).unwrap()
}

fn batch_gradients(c: &mut Criterion) {
    let cfg = EnvConfig::default();
    let d = days(1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = NetworkParams::new(&NetConfig::default(), cfg.n_price, cfg.n_qty, &mut rng);
    let mut group = c.benchmark_group("batch_gradients");
    for batch in [32usize, 64] {
        let s = states(&d[0], &cfg, batch);
        group.bench_with_input(BenchmarkId::new("rayon", batch), &s, |b, s| {
            b.iter(|| black_box(parallel::map(s, |x| gradient(&params, x))))
        });
        group.bench_with_input(BenchmarkId::new("sequential", batch), &s, |b, s| {
            b.iter(|| black_box(parallel::map_seq(s, |x| gradient(&params, x))))
        });
    }
    group.finish();
}

fn daily_backtests(c: &mut Criterion) {
    let cfg = EnvConfig::default();
    let d = days(8);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = NetConfig { macro_hidden: 32, macro_embed: 32, lstm_hidden: 32, head_hidden: 64 };
    let policy = Policy::Network(Box::new(NetworkParams::new(&net, cfg.n_price, cfg.n_qty, &mut rng)));
    let singles: Vec<&[PreparedDay]> = d.chunks(1).collect();
    let mut group = c.benchmark_group("daily_backtests");
    group.sample_size(10);
    group.bench_function("rayon", |b| {
        b.iter(|| black_box(parallel::map(&singles, |day| backtest(&policy, day, &cfg).unwrap())))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(parallel::map_seq(&singles, |day| backtest(&policy, day, &cfg).unwrap())))
    });
    group.finish();
}

criterion_group!(benches, batch_gradients, daily_backtests);
criterion_main!(benches);
