use csalt_core::csalt::{factorize, CsaltConfig, FactorModel};
use csalt_core::objective::{description_length_f, ObjectiveContext};
use csalt_core::synthgen::{generate, GeneratorSpec};

fn main() {
    let spec = GeneratorSpec::with_default_usage(400, vec![200, 200], 12, 0.0, 102).unwrap();
    let truth = generate(&spec).unwrap();
    let (filtered, _) = truth.data.drop_empty_columns();
    let config = CsaltConfig::<f64> { seed: 202, ..CsaltConfig::default() };
    let result = factorize(&filtered, &truth.partition, &config).unwrap();
    let model = &result.model;
    let ctx = ObjectiveContext::<f64>::new(filtered, truth.partition.clone()).unwrap();
    let f_full = description_length_f(&ctx, model).unwrap();
    println!("rank {}, f(model) = {:.3} (result.f = {:.3})", model.rank(), f_full, result.f);
    for drop in 0..model.rank() {
        let keep: Vec<usize> = (0..model.rank()).filter(|&s| s != drop).collect();
        let sub = FactorModel::new(
            model.x().select_columns(&keep),
            model.v_blocks().iter().map(|b| b.select_columns(&keep)).collect(),
            model.y().select_columns(&keep),
            truth.partition.clone(),
        ).unwrap();
        let f_sub = description_length_f(&ctx, &sub).unwrap();
        println!("  drop {drop}: f = {:.3} (delta {:+.3})", f_sub, f_sub - f_full);
    }
}
