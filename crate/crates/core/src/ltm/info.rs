use super::{Category, Engine, LatentTreeModel};
use crate::data::BinaryMatrix;
use crate::{Error, Result};

/// Mutual information (nats) of a 2×2 joint `joint[x][y]`.
pub fn mutual_information(joint: [[f64; 2]; 2]) -> Result<f64> {
    let flat = [joint[0][0], joint[0][1], joint[1][0], joint[1][1]];
    if flat.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!(
            "joint table has a negative or non-finite entry: {joint:?}"
        )));
    }
    let total: f64 = flat.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "joint table sums to {total}, not 1"
        )));
    }
    let px = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let py = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let mut mi = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            let p = joint[x][y];
            if p > 0.0 {
                mi += p * (p / (px[x] * py[y])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// `ln L − (d/2) ln N` with `d` counted from the model's tables.
pub fn bic(model: &LatentTreeModel, data: &BinaryMatrix) -> Result<f64> {
    if data.n_users() == 0 {
        return Err(Error::Empty("BIC needs at least one user".into()));
    }
    let ll = super::log_likelihood(model, data);
    Ok(ll - model.free_parameters() as f64 / 2.0 * (data.n_users() as f64).ln())
}

pub(crate) fn bic_from_ll(model: &LatentTreeModel, ll: f64, n_users: usize) -> f64 {
    ll - model.free_parameters() as f64 / 2.0 * (n_users as f64).ln()
}

/// MI between a category's latent and the child bound to `column`, using
/// the model's own `P(Z)` and `P(item | Z)`.
pub fn model_mi_item_latent(category: &Category, column: usize) -> Result<f64> {
    let v = category.child_var(column).ok_or_else(|| {
        Error::NotFound(format!("column {column} is not a child of this category"))
    })?;
    mi_with_parent(category.model(), v)
}

/// MI between variable `v` and its parent under the model's prior.
pub(crate) fn mi_with_parent(model: &LatentTreeModel, v: usize) -> Result<f64> {
    let p = model
        .parent(v)
        .ok_or_else(|| Error::invalid(format!("variable {v} is a root")))?;
    let pz = Engine::new(model).marginals()[p];
    let t = model.table(v);
    let mut joint = [[0.0; 2]; 2];
    for (z, row) in joint.iter_mut().enumerate() {
        for (x, cell) in row.iter_mut().enumerate() {
            *cell = pz[z] * t.prob(x, z);
        }
    }
    // renormalise away rounding so the sum check only trips on real errors
    let s: f64 = joint.iter().flatten().sum();
    for row in joint.iter_mut() {
        row[0] /= s;
        row[1] /= s;
    }
    mutual_information(joint)
}

/// Empirical MI between two 0/1 columns given as sorted user lists over
/// `n` users.
pub fn empirical_mi(a: &[u32], b: &[u32], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (mut i, mut j, mut both) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                both += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let n = n as f64;
    let n11 = both as f64;
    let n10 = a.len() as f64 - n11;
    let n01 = b.len() as f64 - n11;
    let n00 = n - n11 - n10 - n01;
    mutual_information([[n00 / n, n01 / n], [n10 / n, n11 / n]]).unwrap_or(0.0)
}
