//! Shared helpers for the integration suites: an independent audit of
//! generated instances (written against the generator's contract, not its
//! code) and small statistics utilities.

use csalt_core::binmat::BinaryMatrix;
use csalt_core::synthgen::GroundTruth;

/// Verify every constraint a generated instance must satisfy, by direct
/// entry-wise inspection. Returns the first violation as text.
pub fn audit_ground_truth(truth: &GroundTruth) -> Result<(), String> {
    let spec = &truth.spec;
    let (n, r, c) = (spec.n, spec.rank, spec.class_count());
    let m = spec.total_rows();
    if truth.x.rows() != n || truth.x.cols() != r {
        return Err("pattern matrix shape".into());
    }
    if truth.y.rows() != m || truth.y.cols() != r || truth.v.len() != c {
        return Err("usage/alteration shapes".into());
    }

    // Class specificity, entry-wise.
    for s in 0..r {
        for i in 0..n {
            for v_a in &truth.v {
                if truth.x.get(i, s) && v_a.get(i, s) {
                    return Err(format!("alteration under pattern bit ({i}, {s})"));
                }
            }
            if truth.v.iter().all(|v_a| v_a.get(i, s)) {
                return Err(format!("cell ({i}, {s}) altered in every class"));
            }
        }
    }

    // Density caps and the 2/3 alteration bound.
    for s in 0..r {
        let x_size = (0..n).filter(|&i| truth.x.get(i, s)).count();
        if x_size > n / 10 {
            return Err(format!("pattern column {s} too dense: {x_size}"));
        }
        let alt_mass: usize = truth
            .v
            .iter()
            .map(|v_a| (0..n).filter(|&i| v_a.get(i, s)).count())
            .sum();
        if 3 * alt_mass > 2 * x_size {
            return Err(format!(
                "alterations of column {s} exceed 2/3 bound: {alt_mass} vs {x_size}"
            ));
        }
        for a in 0..c {
            let range = truth.partition.range(a).map_err(|e| e.to_string())?;
            let usage = range.clone().filter(|&j| truth.y.get(j, s)).count();
            if spec.class_usage.get(a, s) {
                if usage > spec.class_rows[a] / 10 {
                    return Err(format!("usage column {s} class {a} too dense: {usage}"));
                }
            } else if usage != 0 {
                return Err(format!("column {s} used by excluded class {a}"));
            }
        }
    }

    // Uniqueness quotas: bits owned by exactly one column.
    let item_quota = n / 100;
    let row_quota = m / 100;
    for s in 0..r {
        let unique_items = (0..n)
            .filter(|&i| truth.x.get(i, s) && (0..r).all(|t| t == s || !truth.x.get(i, t)))
            .count();
        if unique_items < item_quota {
            return Err(format!(
                "pattern column {s} has {unique_items} unique items, quota {item_quota}"
            ));
        }
        let unique_rows = (0..m)
            .filter(|&j| truth.y.get(j, s) && (0..r).all(|t| t == s || !truth.y.get(j, t)))
            .count();
        if unique_rows < row_quota {
            return Err(format!(
                "usage column {s} has {unique_rows} unique rows, quota {row_quota}"
            ));
        }
    }
    Ok(())
}

/// Fraction of cells where the noisy data disagrees with the clean Boolean
/// composition of the planted factors.
pub fn observed_flip_rate(truth: &GroundTruth) -> f64 {
    let clean = truth.clean_data();
    let cells = (truth.data.rows() * truth.data.cols()) as f64;
    let flips = count_disagreements(&clean, &truth.data);
    flips as f64 / cells
}

pub fn count_disagreements(a: &BinaryMatrix, b: &BinaryMatrix) -> usize {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let mut count = 0;
    for j in 0..a.rows() {
        let sa: std::collections::BTreeSet<u32> = a.row(j).iter().copied().collect();
        let sb: std::collections::BTreeSet<u32> = b.row(j).iter().copied().collect();
        count += sa.symmetric_difference(&sb).count();
    }
    count
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    values[values.len() / 2]
}
