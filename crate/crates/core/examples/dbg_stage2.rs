use csalt_core::csalt::{round, CsaltConfig};
use csalt_core::objective::{ObjectiveContext, RelaxedState};
use csalt_core::palm::optimize;
use csalt_core::synthgen::{generate, GeneratorSpec};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let gen_seed: u64 = args[1].parse().unwrap();
    let opt_seed: u64 = args[2].parse().unwrap();
    let variant = args[3].clone();
    let spec = GeneratorSpec::with_default_usage(400, vec![200, 200], 12, 0.0, gen_seed).unwrap();
    let truth = generate(&spec).unwrap();
    let (filtered, _) = truth.data.drop_empty_columns();
    let ctx = ObjectiveContext::<f64>::new(filtered.clone(), truth.partition.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(opt_seed);
    let (n, m) = (ctx.items(), ctx.transactions());
    let r = 10;
    let cfg = CsaltConfig::<f64>::default();
    let u = |rng: &mut ChaCha8Rng, lo: f64, hi: f64, shape: (usize, usize)| {
        Array2::from_shape_fn(shape, |_| rng.gen_range(lo..hi))
    };
    let mut state = match variant.as_str() {
        "A" => RelaxedState { x: u(&mut rng, 0.0, 1.0, (n, r)), v: (0..2).map(|_| u(&mut rng, 0.0, 0.1, (n, r))).collect(), y: u(&mut rng, 0.0, 1.0, (m, r)) },
        "A0" => RelaxedState { x: u(&mut rng, 0.0, 1.0, (n, r)), v: vec![Array2::zeros((n, r)); 2], y: u(&mut rng, 0.0, 1.0, (m, r)) },
        "MID" => RelaxedState { x: u(&mut rng, 0.3, 0.7, (n, r)), v: (0..2).map(|_| u(&mut rng, 0.0, 0.1, (n, r))).collect(), y: u(&mut rng, 0.3, 0.7, (m, r)) },
        "SC" => { // scaled so initial product ~1
            let cap = (2.0 / r as f64).sqrt().min(1.0);
            RelaxedState { x: u(&mut rng, 0.0, cap, (n, r)), v: (0..2).map(|_| u(&mut rng, 0.0, 0.1, (n, r))).collect(), y: u(&mut rng, 0.0, cap, (m, r)) }
        }
        _ => unreachable!(),
    };
    let t0 = std::time::Instant::now();
    let trace = optimize(&ctx, &mut state, &cfg.palm).unwrap();
    let outcome = round(&ctx, &state).unwrap();
    println!("{variant:3} ({gen_seed},{opt_seed}): {:4} iters {:3.0}s rank {:2} f {:8.1} rss {:4}",
        trace.iterations(), t0.elapsed().as_secs_f64(), outcome.model.rank(), outcome.f, outcome.rss);
}
