use csalt_core::synthgen::{generate, GeneratorSpec};

fn main() {
    let gen_seed: u64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let spec = GeneratorSpec::with_default_usage(400, vec![200, 200], 12, 0.0, gen_seed).unwrap();
    let truth = generate(&spec).unwrap();
    let r = truth.rank();
    let xc = truth.x.columns();
    let vc: Vec<Vec<Vec<u32>>> = (0..2).map(|a| truth.v[a].columns()).collect();
    for a in 0..2 {
        for s in 0..r {
            if vc[a][s].is_empty() { continue; }
            let mut shared = 0;
            for &i in &vc[a][s] {
                let elsewhere = (0..r).any(|t| {
                    (t != s && (xc[t].contains(&i) || vc[0][t].contains(&i) || vc[1][t].contains(&i)))
                        || (t == s && xc[t].contains(&i))
                }) || vc[1 - a][s].contains(&i);
                if elsewhere { shared += 1; }
            }
            println!("class {a} col {s}: |A| = {}, shared with other columns: {shared}", vc[a][s].len());
        }
    }
}
