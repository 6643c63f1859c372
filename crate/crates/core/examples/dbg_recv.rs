use csalt_core::csalt::{factorize, CsaltConfig};
use csalt_core::synthgen::{generate, GeneratorSpec};

fn inter(a: &[u32], b: &[u32]) -> usize { a.iter().filter(|x| b.contains(x)).count() }

fn main() {
    let gen_seed: u64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let opt_seed: u64 = std::env::args().nth(2).unwrap().parse().unwrap();
    let spec = GeneratorSpec::with_default_usage(400, vec![200, 200], 12, 0.0, gen_seed).unwrap();
    let truth = generate(&spec).unwrap();
    let (filtered, kept) = truth.data.drop_empty_columns();
    let config = CsaltConfig::<f64> { seed: opt_seed, ..CsaltConfig::default() };
    let result = factorize(&filtered, &truth.partition, &config).unwrap();
    let model = result.model.expand_items(truth.data.cols(), &kept).unwrap();
    let (rec_class, rec_avg) = csalt_core::eval::recall_v(&truth, &model).unwrap();
    println!("recV {:?} avg {:.4}; model rank {}", rec_class, rec_avg, model.rank());

    let r_pad = truth.rank().max(model.rank());
    let groups = model.class_count() + 1;
    // computed side
    let mut comp_pat: Vec<Vec<u32>> = Vec::new();
    comp_pat.extend(model.x().pad_columns(r_pad - model.rank()).columns());
    for b in 0..model.class_count() {
        comp_pat.extend(model.v(b).pad_columns(r_pad - model.rank()).columns());
    }
    for a in 0..2 {
        let y_a = model.y().class_block(model.partition(), a).unwrap().pad_columns(r_pad - model.rank()).columns();
        let tv = truth.v[a].columns();
        let ty = truth.y.class_block(&truth.partition, a).unwrap().columns();
        let mut total_mass = 0usize; let mut total_best = 0.0;
        for s in 0..truth.rank() {
            let mass = tv[s].len() * ty[s].len();
            if mass == 0 { continue; }
            total_mass += mass;
            // best single computed column (ignoring matching conflicts)
            let mut best = (0usize, 0usize);
            for t in 0..groups * r_pad {
                let o = inter(&ty[s], &y_a[t % r_pad]) * inter(&tv[s], &comp_pat[t]);
                if o > best.0 { best = (o, t); }
            }
            total_best += best.0 as f64;
            let grp = best.1 / r_pad;
            println!("  class {a} planted s={s}: |A|={} |rows|={} mass={} best={} ({}%) via {} col {}",
                tv[s].len(), ty[s].len(), mass, best.0, 100 * best.0 / mass,
                if grp == 0 { "X".to_string() } else { format!("V{}", grp - 1) }, best.1 % r_pad);
        }
        println!("  class {a}: upper bound (no conflicts) = {:.4}", total_best / total_mass as f64);
    }
}
