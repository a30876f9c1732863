//! Exact feasibility for small dense linear systems over the rationals.
//!
//! Phase-I simplex with Bland's rule on `y >= 0`, `A y <= b`, `E y = d`.

use num_rational::BigRational;
use num_traits::{Signed, Zero};

pub type Q = BigRational;

/// Row `coeffs . y <= rhs` (or `= rhs` for equalities).
#[derive(Clone, Debug)]
pub struct Row {
    pub coeffs: Vec<Q>,
    pub rhs: Q,
}

/// Systems with more inequality rows than this are solved by adding violated rows lazily.
pub const CUT_THRESHOLD: usize = 60;

fn dot(a: &[Q], y: &[Q]) -> Q {
    a.iter().zip(y).filter(|(c, _)| !c.is_zero()).map(|(c, v)| c * v).sum()
}

/// A point `y >= 0` satisfying all rows, or `None` if none exists.
pub fn feasible(n: usize, le: &[Row], eq: &[Row]) -> Option<Vec<Q>> {
    if le.len() <= CUT_THRESHOLD {
        return phase_one(n, le, eq);
    }
    let mut active: Vec<usize> = (0..CUT_THRESHOLD / 2).collect();
    loop {
        let rows: Vec<Row> = active.iter().map(|&i| le[i].clone()).collect();
        let y = phase_one(n, &rows, eq)?;
        let mut viol: Vec<(Q, usize)> = le
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                let ex = dot(&r.coeffs, &y) - &r.rhs;
                ex.is_positive().then_some((ex, i))
            })
            .collect();
        if viol.is_empty() {
            return Some(y);
        }
        viol.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        active.extend(viol.into_iter().take(20).map(|(_, i)| i));
        active.sort_unstable();
        active.dedup();
    }
}

fn phase_one(n: usize, le: &[Row], eq: &[Row]) -> Option<Vec<Q>> {
    let m1 = le.len();
    let m = m1 + eq.len();
    // columns: y (n), slacks (m1), artificials (one per row that needs one), rhs
    let mut needs_art = vec![false; m];
    let mut rows: Vec<Vec<Q>> = Vec::with_capacity(m);
    for (i, r) in le.iter().chain(eq).enumerate() {
        let mut row = vec![Q::zero(); n + m1];
        for (j, c) in r.coeffs.iter().enumerate() {
            row[j] = c.clone();
        }
        if i < m1 {
            row[n + i] = Q::from_integer(1.into());
        }
        let mut rhs = r.rhs.clone();
        needs_art[i] = i >= m1 || rhs.is_negative();
        if rhs.is_negative() {
            for x in row.iter_mut() {
                *x = -x.clone();
            }
            rhs = -rhs;
        }
        row.push(rhs);
        rows.push(row);
    }
    let arts: Vec<usize> = (0..m).filter(|&i| needs_art[i]).collect();
    let width = n + m1 + arts.len();
    let mut basis = vec![0usize; m];
    for row in rows.iter_mut() {
        let rhs = row.pop().unwrap();
        row.resize(width, Q::zero());
        row.push(rhs);
    }
    for i in 0..m {
        if let Some(k) = arts.iter().position(|&a| a == i) {
            rows[i][n + m1 + k] = Q::from_integer(1.into());
            basis[i] = n + m1 + k;
        } else {
            basis[i] = n + i;
        }
    }
    // reduced costs for minimizing the sum of artificials
    let mut obj = vec![Q::zero(); width + 1];
    for k in 0..arts.len() {
        obj[n + m1 + k] = Q::from_integer(1.into());
    }
    for &i in &arts {
        for j in 0..=width {
            obj[j] = &obj[j] - &rows[i][j];
        }
    }
    loop {
        let Some(enter) = (0..width).find(|&j| obj[j].is_negative()) else { break };
        let mut leave: Option<(usize, Q)> = None;
        for i in 0..m {
            if rows[i][enter].is_positive() {
                let r = &rows[i][width] / &rows[i][enter];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => r < *lr || (r == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, r));
                }
            }
        }
        // phase I is bounded below by zero, so some row always limits the step
        let (p, _) = leave?;
        pivot(&mut rows, &mut obj, p, enter);
        basis[p] = enter;
    }
    if !obj[width].is_zero() {
        return None;
    }
    let mut y = vec![Q::zero(); n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            y[b] = rows[i][width].clone();
        }
    }
    Some(y)
}

fn pivot(rows: &mut [Vec<Q>], obj: &mut [Q], p: usize, c: usize) {
    let piv = rows[p][c].clone();
    for x in rows[p].iter_mut() {
        if !x.is_zero() {
            *x = &*x / &piv;
        }
    }
    let prow = rows[p].clone();
    let nz: Vec<usize> = (0..prow.len()).filter(|&j| !prow[j].is_zero()).collect();
    for (i, row) in rows.iter_mut().enumerate() {
        if i == p || row[c].is_zero() {
            continue;
        }
        let k = row[c].clone();
        for &j in &nz {
            row[j] = &row[j] - &k * &prow[j];
        }
    }
    if !obj[c].is_zero() {
        let k = obj[c].clone();
        for &j in &nz {
            obj[j] = &obj[j] - &k * &prow[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn q(p: i64, d: i64) -> Q {
        Q::new(BigInt::from(p), BigInt::from(d))
    }

    fn row(c: &[i64], r: i64) -> Row {
        Row { coeffs: c.iter().map(|&x| q(x, 1)).collect(), rhs: q(r, 1) }
    }

    fn check(n: usize, le: &[Row], eq: &[Row], y: &[Q]) {
        assert_eq!(y.len(), n);
        assert!(y.iter().all(|v| !v.is_negative()));
        for r in le {
            assert!(dot(&r.coeffs, y) <= r.rhs);
        }
        for r in eq {
            assert_eq!(dot(&r.coeffs, y), r.rhs);
        }
    }

    #[test]
    fn small_systems() {
        let le = [row(&[1, -2], 0), row(&[-1, 1], -1)];
        let eq = [row(&[1, 1], 3)];
        let y = feasible(2, &le, &eq).unwrap();
        check(2, &le, &eq, &y);
        // x <= y - 1 and y <= x together with x, y >= 0 is empty
        let le = [row(&[1, -1], -1), row(&[-1, 1], 0)];
        assert!(feasible(2, &le, &[]).is_none());
        assert_eq!(feasible(1, &[], &[row(&[2], 1)]).unwrap(), vec![q(1, 2)]);
    }

    #[test]
    fn lazy_rows_agree_with_full_solve() {
        // many redundant rows around y0 + y1 = 1, y0 <= k/100
        let mut le = vec![];
        for k in 0..150 {
            le.push(Row { coeffs: vec![q(100, 1), q(0, 1)], rhs: q(70 + k, 1) });
        }
        let eq = [row(&[1, 1], 1)];
        let y = feasible(2, &le, &eq).unwrap();
        check(2, &le, &eq, &y);
        le.push(row(&[-1, 0], -1));
        assert!(feasible(2, &le, &eq).is_none());
    }
}
