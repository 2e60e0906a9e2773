//! Root systems of split adjoint groups.
//!
//! Everything here is exact integer arithmetic. Roots, weights and Picard
//! classes are written in simple-root coordinates; a Weyl group element is
//! stored as the integer matrix of its action on those coordinates (column
//! `j` is the image of the simple root `e_j`).

use std::collections::{HashSet, VecDeque};

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Largest rank accepted by the reflection closure and the Weyl enumeration.
pub const MAX_RANK: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeylElement {
    /// Row-major `rank x rank` matrix acting on root coordinates.
    pub matrix: Vec<i64>,
    pub length: usize,
}

impl WeylElement {
    pub fn apply(&self, v: &[i64]) -> Vec<i64> {
        let r = v.len();
        (0..r)
            .map(|i| (0..r).map(|j| self.matrix[i * r + j] * v[j]).sum())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RootDatum {
    pub label: String,
    pub rank: usize,
    /// `cartan[i][j] = <alpha_j, alpha_i^vee>`.
    pub cartan: Vec<Vec<i64>>,
    pub positive_roots: Vec<Vec<i64>>,
    pub weyl: Vec<WeylElement>,
    /// Coefficients of the sum of positive roots in the simple-root basis.
    pub kappa: Vec<i64>,
    /// `2 rho` in root coordinates; equal to `kappa`.
    pub rho2: Vec<i64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RootDatumSummary<'a> {
    pub label: &'a str,
    pub rank: usize,
    pub cartan: &'a [Vec<i64>],
    pub kappa: &'a [i64],
}

/// Type `A_{n-1}` Cartan matrix.
pub fn cartan_type_a(rank: usize) -> Vec<Vec<i64>> {
    (0..rank)
        .map(|i| {
            (0..rank)
                .map(|j| match i.abs_diff(j) {
                    0 => 2,
                    1 => -1,
                    _ => 0,
                })
                .collect()
        })
        .collect()
}

/// The root datum of `PGL_n`, `2 <= n <= 6`.
pub fn build_pgl(n: usize) -> Result<RootDatum> {
    if !(2..=MAX_RANK + 1).contains(&n) {
        return invalid(format!("PGL_n requires 2 <= n <= {}, got n = {n}", MAX_RANK + 1));
    }
    RootDatum::from_cartan(format!("PGL_{n}"), cartan_type_a(n - 1))
}

fn validate_cartan(c: &[Vec<i64>]) -> Result<()> {
    let r = c.len();
    if r == 0 || r > MAX_RANK {
        return invalid(format!("Cartan matrix rank must be in 1..={MAX_RANK}, got {r}"));
    }
    for (i, row) in c.iter().enumerate() {
        if row.len() != r {
            return invalid("Cartan matrix must be square");
        }
        for (j, &x) in row.iter().enumerate() {
            if i == j && x != 2 {
                return invalid("Cartan matrix must have 2 on the diagonal");
            }
            if i != j && (x > 0 || (x == 0) != (c[j][i] == 0)) {
                return invalid("Cartan matrix off-diagonal entries must be <= 0 with symmetric zero pattern");
            }
        }
    }
    Ok(())
}

fn simple_reflection(c: &[Vec<i64>], v: &[i64], i: usize) -> Vec<i64> {
    let pairing: i64 = v.iter().zip(&c[i]).map(|(a, b)| a * b).sum();
    let mut out = v.to_vec();
    out[i] -= pairing;
    out
}

fn is_positive(v: &[i64]) -> bool {
    v.iter().all(|&x| x >= 0) && v.iter().any(|&x| x > 0)
}

/// All positive roots, by closing the simple roots under "reflect and keep
/// the positive ones". Rejects after `4 rank^2` rounds without stabilizing.
pub fn positive_roots_from_cartan(c: &[Vec<i64>]) -> Result<Vec<Vec<i64>>> {
    validate_cartan(c)?;
    let r = c.len();
    let mut roots: Vec<Vec<i64>> = (0..r)
        .map(|i| (0..r).map(|j| i64::from(i == j)).collect())
        .collect();
    let mut seen: HashSet<Vec<i64>> = roots.iter().cloned().collect();
    let mut frontier = roots.clone();
    let bound = 4 * r * r;
    let mut rounds = 0;
    while !frontier.is_empty() {
        rounds += 1;
        if rounds > bound {
            return Err(Error::NotFiniteType(bound));
        }
        let mut next = Vec::new();
        for beta in &frontier {
            for i in 0..r {
                let image = simple_reflection(c, beta, i);
                if is_positive(&image) && seen.insert(image.clone()) {
                    next.push(image);
                }
            }
        }
        roots.extend(next.iter().cloned());
        frontier = next;
    }
    roots.sort_by(|a, b| {
        let ha: i64 = a.iter().sum();
        let hb: i64 = b.iter().sum();
        ha.cmp(&hb).then_with(|| b.cmp(a))
    });
    Ok(roots)
}

fn identity(r: usize) -> Vec<i64> {
    let mut m = vec![0; r * r];
    for i in 0..r {
        m[i * r + i] = 1;
    }
    m
}

fn reflection_matrix(c: &[Vec<i64>], i: usize) -> Vec<i64> {
    let r = c.len();
    let mut m = identity(r);
    for j in 0..r {
        m[i * r + j] -= c[i][j];
    }
    m
}

fn matmul(a: &[i64], b: &[i64], r: usize) -> Vec<i64> {
    let mut out = vec![0; r * r];
    for i in 0..r {
        for k in 0..r {
            let x = a[i * r + k];
            if x != 0 {
                for j in 0..r {
                    out[i * r + j] += x * b[k * r + j];
                }
            }
        }
    }
    out
}

impl RootDatum {
    pub fn from_cartan(label: impl Into<String>, cartan: Vec<Vec<i64>>) -> Result<Self> {
        let positive_roots = positive_roots_from_cartan(&cartan)?;
        let r = cartan.len();
        let mut kappa = vec![0; r];
        for beta in &positive_roots {
            for (k, b) in kappa.iter_mut().zip(beta) {
                *k += b;
            }
        }

        // Breadth-first closure over the simple reflections.
        let gens: Vec<Vec<i64>> = (0..r).map(|i| reflection_matrix(&cartan, i)).collect();
        let mut seen: HashSet<Vec<i64>> = HashSet::new();
        let mut queue = VecDeque::from([identity(r)]);
        let mut elements = Vec::new();
        seen.insert(identity(r));
        while let Some(w) = queue.pop_front() {
            for g in &gens {
                let next = matmul(&w, g, r);
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
            elements.push(w);
        }
        let weyl = elements
            .into_iter()
            .map(|matrix| {
                let mut el = WeylElement { matrix, length: 0 };
                el.length = positive_roots
                    .iter()
                    .filter(|b| el.apply(b).iter().any(|&x| x < 0))
                    .count();
                el
            })
            .collect();

        Ok(RootDatum {
            label: label.into(),
            rank: r,
            rho2: kappa.clone(),
            kappa,
            cartan,
            positive_roots,
            weyl,
        })
    }

    pub fn summary(&self) -> RootDatumSummary<'_> {
        RootDatumSummary {
            label: &self.label,
            rank: self.rank,
            cartan: &self.cartan,
            kappa: &self.kappa,
        }
    }

    /// `n` if this is the type `A_{n-1}` datum of `PGL_n`.
    pub fn type_a_degree(&self) -> Option<usize> {
        (self.cartan == cartan_type_a(self.rank)).then_some(self.rank + 1)
    }

    pub fn dim_group(&self) -> usize {
        self.rank + 2 * self.positive_roots.len()
    }

    pub fn longest_element(&self) -> &WeylElement {
        self.weyl
            .iter()
            .max_by_key(|w| w.length)
            .expect("Weyl group is never empty")
    }

    /// Image of the simple root `alpha_i` under a Weyl element.
    pub fn image_of_simple(&self, w: &WeylElement, i: usize) -> Vec<i64> {
        (0..self.rank).map(|k| w.matrix[k * self.rank + i]).collect()
    }

    /// Minimal-length representatives of `W / W_J`, where `W_J` is generated
    /// by the simple reflections in `levi` (a mask over simple roots).
    pub fn minimal_coset_reps(&self, levi: &[bool]) -> Vec<&WeylElement> {
        self.weyl
            .iter()
            .filter(|w| {
                (0..self.rank)
                    .filter(|&j| levi[j])
                    .all(|j| is_positive(&self.image_of_simple(w, j)))
            })
            .collect()
    }

    /// Number of double cosets `W_J \ W / W_J` for the parabolic subgroup
    /// generated by the reflections in `levi`.
    pub fn double_coset_count(&self, levi: &[bool]) -> usize {
        let r = self.rank;
        let gens: Vec<Vec<i64>> = (0..r)
            .filter(|&i| levi[i])
            .map(|i| reflection_matrix(&self.cartan, i))
            .collect();
        let mut unvisited: HashSet<&Vec<i64>> = self.weyl.iter().map(|w| &w.matrix).collect();
        let mut count = 0;
        for w in &self.weyl {
            if !unvisited.contains(&w.matrix) {
                continue;
            }
            count += 1;
            let mut queue = VecDeque::from([w.matrix.clone()]);
            unvisited.remove(&w.matrix);
            while let Some(x) = queue.pop_front() {
                for g in &gens {
                    for y in [matmul(g, &x, r), matmul(&x, g, r)] {
                        if let Some(&key) = unvisited.get(&y) {
                            unvisited.remove(key);
                            queue.push_back(y);
                        }
                    }
                }
            }
        }
        count
    }

    /// `sum_alpha kappa_alpha a_alpha`, the exponent with `delta_B(t(a)) = q^exponent`.
    pub fn delta_b_exponent(&self, a: &[i64]) -> Result<i64> {
        if a.len() != self.rank {
            return invalid(format!("exponent vector has length {}, rank is {}", a.len(), self.rank));
        }
        if a.iter().any(|&x| x < 0) {
            return invalid("Cartan exponents must be nonnegative");
        }
        Ok(self.kappa.iter().zip(a).map(|(k, x)| k * x).sum())
    }

    /// `2 rho` recovered from `<2 rho, alpha_i^vee> = 2` by solving `C x = 2`.
    pub fn kappa_from_dual_pairing(&self) -> Vec<Ratio<i64>> {
        let r = self.rank;
        let mut m: Vec<Vec<Ratio<i64>>> = self
            .cartan
            .iter()
            .map(|row| {
                let mut v: Vec<Ratio<i64>> = row.iter().map(|&x| Ratio::from_integer(x)).collect();
                v.push(Ratio::from_integer(2));
                v
            })
            .collect();
        for col in 0..r {
            let pivot = (col..r)
                .find(|&i| !m[i][col].is_zero())
                .expect("Cartan matrices of finite type are invertible");
            m.swap(col, pivot);
            let inv = Ratio::one() / m[col][col];
            for x in m[col].iter_mut() {
                *x *= inv;
            }
            for i in 0..r {
                if i != col && !m[i][col].is_zero() {
                    let f = m[i][col];
                    for j in 0..=r {
                        let delta = f * m[col][j];
                        m[i][j] -= delta;
                    }
                }
            }
        }
        m.into_iter().map(|row| row[r]).collect()
    }
}

/// Iterate over all subsets of `{0, .., rank-1}` as boolean masks, in
/// increasing bitmask order.
pub fn subsets(rank: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u32..(1 << rank)).map(move |bits| (0..rank).map(|i| bits & (1 << i) != 0).collect())
}
