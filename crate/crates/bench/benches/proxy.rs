use criterion::{criterion_group, criterion_main, Criterion};

use dualprox_bench::{dcopf_fixture, CASE118, CASE14};
use dualprox_core::mlp::{MlpModel, Normalizer, Proxy};
use dualprox_core::oracle::solve_lp;
use dualprox_core::{Method, TrainConfig};

fn inference_vs_oracle(c: &mut Criterion) {
    for (name, case) in [("case14", CASE14), ("case118", CASE118)] {
        let (model, features) = dcopf_fixture(case, 256);
        let template = model.template().unwrap();
        let mut net = MlpModel::new(model.n_bus(), 128, Method::S3l.head(), template.m(), template.n(), 0);
        net.set_normalizer(Normalizer::fit(&features)).unwrap();
        let proxy = Proxy {
            model: net,
            config: TrainConfig::default(),
        };
        c.bench_function(&format!("{name}/proxy_batch256"), |b| {
            b.iter(|| proxy.predict(&template, &features).unwrap())
        });
        let inst = model.instance(&features.row(0).transpose()).unwrap();
        c.bench_function(&format!("{name}/ipm_single"), |b| b.iter(|| solve_lp(&inst)));
    }
}

criterion_group!(benches, inference_vs_oracle);
criterion_main!(benches);
