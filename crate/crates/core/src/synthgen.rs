//! Planted-model data generation: factor sampling under uniqueness quotas and
//! density caps, class-specific alteration sampling under the 2/3-size bound,
//! and Bernoulli bit-flip noise.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binmat::{BinaryMatrix, ClassPartition};
use crate::csalt::FactorModel;
use crate::{Error, Result};

/// Parameters of one generated instance.
///
/// `class_usage` is the `c x rank` matrix saying which classes use which
/// planted pattern. Constraints honored by [`generate`]: every pattern and
/// usage column keeps at least `n/100` (resp. `m/100`) uniquely assigned bits,
/// column densities stay below `n/10` (resp. `m_a/10` in the classes that use
/// the pattern), alterations are class-specific with total size at most 2/3 of
/// the pattern.
#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub n: usize,
    pub class_rows: Vec<usize>,
    pub rank: usize,
    pub class_usage: BinaryMatrix,
    pub flip_probability: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    /// Spec with the default class-usage matrix for `class_rows.len()` classes.
    pub fn with_default_usage(
        n: usize,
        class_rows: Vec<usize>,
        rank: usize,
        flip_probability: f64,
        seed: u64,
    ) -> Result<Self> {
        let class_usage = default_class_matrix(class_rows.len(), rank)?;
        Ok(Self {
            n,
            class_rows,
            rank,
            class_usage,
            flip_probability,
            seed,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_rows.len()
    }

    pub fn total_rows(&self) -> usize {
        self.class_rows.iter().sum()
    }
}

/// A planted factorization with the noisy data generated from it.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub x: BinaryMatrix,
    pub v: Vec<BinaryMatrix>,
    pub y: BinaryMatrix,
    pub partition: ClassPartition,
    pub data: BinaryMatrix,
    pub spec: GeneratorSpec,
}

impl GroundTruth {
    /// The planted factors as a model (for evaluating truth against itself,
    /// or writing truth in the model format).
    pub fn as_model(&self) -> FactorModel {
        FactorModel::new(
            self.x.clone(),
            self.v.clone(),
            self.y.clone(),
            self.partition.clone(),
        )
        .expect("planted factors are consistent")
    }

    /// Noise-free composition `theta(Y^(a)(X + V^(a))^T)` stacked over classes.
    pub fn clean_data(&self) -> BinaryMatrix {
        self.as_model()
            .reconstruction()
            .expect("planted factors are consistent")
    }

    pub fn rank(&self) -> usize {
        self.x.cols()
    }
}

/// The default class-usage matrices for 2, 3 or 4 classes: a fixed block of
/// `c+1` columns (one all-classes column plus one overlap ladder) repeated
/// `rank / (c+1)` times.
pub fn default_class_matrix(classes: usize, rank: usize) -> Result<BinaryMatrix> {
    let block: &[&[u8]] = match classes {
        2 => &[&[1, 0, 1], &[1, 1, 0]],
        3 => &[&[1, 1, 0, 0], &[1, 0, 1, 0], &[1, 0, 1, 1]],
        4 => &[
            &[1, 1, 0, 0, 0],
            &[1, 0, 1, 0, 0],
            &[1, 0, 1, 1, 0],
            &[1, 0, 1, 1, 1],
        ],
        _ => {
            return Err(Error::InvalidInput(format!(
                "no default class-usage matrix for {classes} classes (supported: 2, 3, 4)"
            )))
        }
    };
    let width = block[0].len();
    if rank % width != 0 {
        return Err(Error::InvalidInput(format!(
            "rank {rank} is not divisible by {width} (block width for {classes} classes)"
        )));
    }
    let reps = rank / width;
    let rows: Vec<Vec<u8>> = block
        .iter()
        .map(|row| row.repeat(reps))
        .collect();
    BinaryMatrix::from_dense(&rows)
}

/// Generate a planted factorization and its noisy data.
pub fn generate(spec: &GeneratorSpec) -> Result<GroundTruth> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let partition = ClassPartition::new(spec.class_rows.clone())?;
    let (n, m, r, c) = (spec.n, spec.total_rows(), spec.rank, spec.class_count());
    let unique_items = n / 100;
    let unique_rows = m / 100;
    let item_cap = n / 10;

    // Patterns: disjoint unique-item quotas first, then fill from the shared
    // pool up to the density cap.
    let mut item_order: Vec<usize> = (0..n).collect();
    item_order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let mut unique_of: Vec<Vec<usize>> = Vec::with_capacity(r);
    for _ in 0..r {
        unique_of.push(item_order[cursor..cursor + unique_items].to_vec());
        cursor += unique_items;
    }
    let free_items: Vec<usize> = item_order[cursor..].to_vec();

    let mut x_cols: Vec<Vec<usize>> = Vec::with_capacity(r);
    for s in 0..r {
        let lo = unique_of[s].len().max(2);
        if lo > item_cap {
            return Err(Error::ConstraintInfeasible(format!(
                "pattern column {s}: minimum size {lo} exceeds density cap {item_cap}"
            )));
        }
        let target = rng.gen_range(lo..=item_cap);
        let mut col = unique_of[s].clone();
        let extra = target - col.len();
        for idx in index::sample(&mut rng, free_items.len(), extra) {
            col.push(free_items[idx]);
        }
        col.sort_unstable();
        x_cols.push(col);
    }

    // Usage: the global unique-row quota is split evenly over the classes that
    // use the pattern; each class block is then filled up to its density cap.
    let mut row_order_per_class: Vec<Vec<usize>> = (0..c)
        .map(|a| {
            let mut rows: Vec<usize> = partition.range(a).expect("valid class").collect();
            rows.shuffle(&mut rng);
            rows
        })
        .collect();
    let mut y_cols: Vec<Vec<usize>> = vec![Vec::new(); r];
    let mut class_of_col: Vec<Vec<usize>> = Vec::with_capacity(r);
    for s in 0..r {
        let eligible: Vec<usize> = (0..c).filter(|&a| spec.class_usage.get(a, s)).collect();
        if eligible.is_empty() {
            return Err(Error::ConstraintInfeasible(format!(
                "pattern column {s} is used by no class"
            )));
        }
        class_of_col.push(eligible);
    }
    // Reserve unique rows for every column before filling, so one column's
    // fill cannot consume another's quota.
    let mut unique_rows_of: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); c]; r];
    for s in 0..r {
        let eligible = &class_of_col[s];
        let mut shuffled = eligible.clone();
        shuffled.shuffle(&mut rng);
        let base = unique_rows / eligible.len();
        let extra = unique_rows % eligible.len();
        for (k, &a) in shuffled.iter().enumerate() {
            let take = base + usize::from(k < extra);
            let pool = &mut row_order_per_class[a];
            if pool.len() < take {
                return Err(Error::ConstraintInfeasible(format!(
                    "class {a} has too few rows for the unique-usage quotas"
                )));
            }
            unique_rows_of[s][a] = pool.split_off(pool.len() - take);
        }
    }
    let free_rows_per_class: Vec<Vec<usize>> = row_order_per_class;
    for s in 0..r {
        let mut col = Vec::new();
        for &a in &class_of_col[s] {
            let cap = spec.class_rows[a] / 10;
            let reserved = unique_rows_of[s][a].clone();
            let lo = reserved.len().max(2.min(cap));
            if lo > cap {
                return Err(Error::ConstraintInfeasible(format!(
                    "usage column {s}, class {a}: minimum size {lo} exceeds cap {cap}"
                )));
            }
            let target = rng.gen_range(lo..=cap);
            let mut rows = reserved;
            let extra = target - rows.len();
            let pool = &free_rows_per_class[a];
            for idx in index::sample(&mut rng, pool.len(), extra.min(pool.len())) {
                rows.push(pool[idx]);
            }
            col.extend(rows);
        }
        col.sort_unstable();
        y_cols[s] = col;
    }

    // Alterations: per column, a random subset of the using classes receives
    // pairwise-disjoint item sets drawn outside the pattern's support, with
    // total size within 2/3 of the pattern size. Items untouched by any other
    // column are preferred so planted alterations stay identifiable; when that
    // pool runs dry the draw falls back to shared free items. A single class
    // admits no class-specific alterations at all.
    let mut v_cols: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); c]; r];
    if c > 1 {
        let mut in_any_pattern = vec![false; n];
        for col in &x_cols {
            for &i in col {
                in_any_pattern[i] = true;
            }
        }
        let mut taken = vec![false; n];
        for s in 0..r {
            let budget = 2 * x_cols[s].len() / 3;
            if budget == 0 {
                continue;
            }
            let chosen: Vec<usize> = class_of_col[s]
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(0.5))
                .collect();
            if chosen.is_empty() {
                continue;
            }
            let share = budget / chosen.len();
            if share == 0 {
                continue;
            }
            let in_pattern: std::collections::HashSet<usize> =
                x_cols[s].iter().copied().collect();
            let mut fresh: Vec<usize> = free_items
                .iter()
                .copied()
                .filter(|&i| !in_any_pattern[i] && !taken[i])
                .collect();
            let mut fallback: Vec<usize> = free_items
                .iter()
                .copied()
                .filter(|&i| (in_any_pattern[i] || taken[i]) && !in_pattern.contains(&i))
                .collect();
            for &a in &chosen {
                let want = rng.gen_range(1..=share);
                let mut picked = draw_from(&mut rng, &mut fresh, want);
                if picked.len() < want {
                    picked.extend(draw_from(&mut rng, &mut fallback, want - picked.len()));
                }
                for &i in &picked {
                    taken[i] = true;
                }
                picked.sort_unstable();
                v_cols[s][a] = picked;
            }
        }
    }

    let x = columns_to_matrix(n, r, &x_cols);
    let y = columns_to_matrix_rows(m, r, &y_cols);
    let v: Vec<BinaryMatrix> = (0..c)
        .map(|a| {
            let cols: Vec<Vec<usize>> = (0..r).map(|s| v_cols[s][a].clone()).collect();
            columns_to_matrix(n, r, &cols)
        })
        .collect();

    let truth_model = FactorModel::new(x.clone(), v.clone(), y.clone(), partition.clone())?;
    let clean = truth_model.reconstruction()?;
    let data = flip_noise(&clean, spec.flip_probability, &mut rng)?;
    Ok(GroundTruth {
        x,
        v,
        y,
        partition,
        data,
        spec: spec.clone(),
    })
}

/// Flip every bit independently with probability `p`.
pub fn flip_noise(m: &BinaryMatrix, p: f64, rng: &mut ChaCha8Rng) -> Result<BinaryMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "flip probability {p} outside [0, 1]"
        )));
    }
    let mut out = BinaryMatrix::zeros(m.rows(), m.cols());
    for j in 0..m.rows() {
        let row = m.row(j);
        let mut next = row.iter().peekable();
        for i in 0..m.cols() {
            let present = next.peek().is_some_and(|&&x| x as usize == i);
            if present {
                next.next();
            }
            if present != rng.gen_bool(p) {
                out.set(j, i, true);
            }
        }
    }
    Ok(out)
}

fn validate(spec: &GeneratorSpec) -> Result<()> {
    let c = spec.class_count();
    if c == 0 || spec.class_rows.iter().any(|&m| m == 0) {
        return Err(Error::InvalidInput("every class needs at least one row".into()));
    }
    if spec.rank == 0 {
        return Err(Error::InvalidInput("rank must be positive".into()));
    }
    if !(0.0..0.5).contains(&spec.flip_probability) {
        return Err(Error::InvalidInput(format!(
            "flip probability {} outside [0, 0.5)",
            spec.flip_probability
        )));
    }
    if spec.class_usage.rows() != c || spec.class_usage.cols() != spec.rank {
        return Err(Error::InvalidInput(format!(
            "class-usage matrix must be {c}x{}, found {}x{}",
            spec.rank,
            spec.class_usage.rows(),
            spec.class_usage.cols()
        )));
    }
    let n = spec.n;
    if n / 10 < 2 {
        return Err(Error::ConstraintInfeasible(format!(
            "n = {n} leaves no room for patterns of at least two items"
        )));
    }
    if spec.rank * (n / 100) > n {
        return Err(Error::ConstraintInfeasible(format!(
            "unique-item quotas need {} items, data has {n}",
            spec.rank * (n / 100)
        )));
    }
    Ok(())
}

/// Remove and return up to `count` uniformly chosen elements of `pool`.
fn draw_from(rng: &mut ChaCha8Rng, pool: &mut Vec<usize>, count: usize) -> Vec<usize> {
    let take = count.min(pool.len());
    if take == 0 {
        return Vec::new();
    }
    let mut indices: Vec<usize> = index::sample(rng, pool.len(), take).into_vec();
    indices.sort_unstable_by(|a, b| b.cmp(a));
    indices.iter().map(|&idx| pool.swap_remove(idx)).collect()
}

fn columns_to_matrix(rows: usize, cols: usize, col_items: &[Vec<usize>]) -> BinaryMatrix {
    let entries: Vec<(usize, usize)> = col_items
        .iter()
        .enumerate()
        .flat_map(|(s, items)| items.iter().map(move |&i| (i, s)))
        .collect();
    BinaryMatrix::from_entries(rows, cols, &entries).expect("generator indices in range")
}

fn columns_to_matrix_rows(rows: usize, cols: usize, col_rows: &[Vec<usize>]) -> BinaryMatrix {
    let entries: Vec<(usize, usize)> = col_rows
        .iter()
        .enumerate()
        .flat_map(|(s, rs)| rs.iter().map(move |&j| (j, s)))
        .collect();
    BinaryMatrix::from_entries(rows, cols, &entries).expect("generator indices in range")
}
