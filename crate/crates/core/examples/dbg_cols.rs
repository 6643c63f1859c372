use csalt_core::csalt::{factorize, CsaltConfig};
use csalt_core::eval::evaluate;
use csalt_core::synthgen::{generate, GeneratorSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let gen_seed: u64 = args[1].parse().unwrap();
    let opt_seed: u64 = args[2].parse().unwrap();
    let spec = GeneratorSpec::with_default_usage(400, vec![200, 200], 12, 0.0, gen_seed).unwrap();
    let truth = generate(&spec).unwrap();
    let (filtered, kept) = truth.data.drop_empty_columns();
    let config = CsaltConfig::<f64> { seed: opt_seed, ..CsaltConfig::default() };
    let result = factorize(&filtered, &truth.partition, &config).unwrap();
    let model = result.model.expand_items(truth.data.cols(), &kept).unwrap();
    let report = evaluate(&truth, &model).unwrap();
    println!("rank {} rss {} F {:.4} recV {:.4}", model.rank(), report.rss, report.f_avg, report.rec_v_avg);

    // truth column info
    let tx = truth.x.columns();
    let ty: Vec<Vec<Vec<u32>>> = (0..2).map(|a| truth.y.class_block(&truth.partition, a).unwrap().columns()).collect();
    let tv: Vec<Vec<Vec<u32>>> = (0..2).map(|a| truth.v[a].columns()).collect();
    println!("truth columns (s: |X| |V0| |V1| |Y0| |Y1|):");
    for s in 0..truth.rank() {
        println!("  t{s:2}: {:3} {:3} {:3} {:3} {:3}", tx[s].len(), tv[0][s].len(), tv[1][s].len(), ty[0][s].len(), ty[1][s].len());
    }
    let mx = model.x().columns();
    let my: Vec<Vec<Vec<u32>>> = (0..2).map(|a| model.y().class_block(model.partition(), a).unwrap().columns()).collect();
    let mv: Vec<Vec<Vec<u32>>> = (0..2).map(|a| model.v(a).columns()).collect();
    println!("model columns, with best truth overlap per class (cells inter/model/truth):");
    for t in 0..model.rank() {
        print!("  m{t:2}: |X|={:3} |V0|={:3} |V1|={:3} |Y0|={:3} |Y1|={:3}", mx[t].len(), mv[0][t].len(), mv[1][t].len(), my[0][t].len(), my[1][t].len());
        for a in 0..2 {
            let m_items: Vec<u32> = { let mut v = mx[t].clone(); v.extend(&mv[a][t]); v.sort(); v.dedup(); v };
            let m_mass = my[a][t].len() * m_items.len();
            let mut best = (0usize, 0usize, 0usize);
            for s in 0..truth.rank() {
                let t_items: Vec<u32> = { let mut v = tx[s].clone(); v.extend(&tv[a][s]); v.sort(); v.dedup(); v };
                let ri = inter(&ty[a][s], &my[a][t]) * inter(&t_items, &m_items);
                if ri > best.0 { best = (ri, ty[a][s].len() * t_items.len(), s); }
            }
            print!(" | c{a}: best t{} {}/{}/{}", best.2, best.0, m_mass, best.1);
        }
        println!();
    }
}
fn inter(a: &[u32], b: &[u32]) -> usize { a.iter().filter(|x| b.contains(x)).count() }
