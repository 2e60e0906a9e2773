//! Picard-lattice bookkeeping in root coordinates.
//!
//! A class `L` is written `lambda = sum s_alpha alpha` in the simple-root
//! basis. The boundary divisor `D_alpha` has class `alpha`, so the effective
//! cone is the closed nonnegative orthant and `-K_X` has coordinates
//! `kappa_alpha + 1`.

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::rootsys::RootDatum;

/// Height exponents `s = (s_alpha)` indexed by the simple roots.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SVector {
    values: Vec<Rational64>,
}

impl SVector {
    pub fn new(values: Vec<Rational64>) -> Self {
        SVector { values }
    }

    pub fn from_ints(values: &[i64]) -> Self {
        SVector::new(values.iter().map(|&x| Rational64::from_integer(x)).collect())
    }

    pub fn values(&self) -> &[Rational64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn scale(&self, c: Rational64) -> SVector {
        SVector::new(self.values.iter().map(|x| x * c).collect())
    }

    pub fn add(&self, other: &SVector) -> SVector {
        SVector::new(self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect())
    }

    /// Integer coordinates, if every coordinate is integral.
    pub fn as_integers(&self) -> Option<Vec<i64>> {
        self.values
            .iter()
            .map(|x| x.is_integer().then(|| x.to_integer()))
            .collect()
    }

    fn check_rank(&self, datum: &RootDatum) -> Result<()> {
        if self.len() != datum.rank {
            return invalid(format!(
                "class has {} coordinates, {} has rank {}",
                self.len(),
                datum.label,
                datum.rank
            ));
        }
        Ok(())
    }
}

impl fmt::Display for SVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.values.iter().map(|x| x.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Parses a comma-separated list of rationals such as `3,3/2,1`.
impl FromStr for SVector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|part| {
                part.trim()
                    .parse::<Rational64>()
                    .map_err(|_| Error::InvalidArgument(format!("not a rational number: {part:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return invalid("empty class");
        }
        Ok(SVector::new(values))
    }
}

impl Serialize for SVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.values.iter().map(|x| x.to_string()))
    }
}

/// Location and order of the rightmost pole of the height zeta function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoleData {
    pub sigma: Rational64,
    /// Indices (0-based) of the simple roots attaining the maximum.
    pub argmax: Vec<usize>,
    pub multiplicity: usize,
}

impl Serialize for PoleData {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("PoleData", 4)?;
        st.serialize_field("sigma", &self.sigma.to_string())?;
        st.serialize_field("sigma_f64", &self.sigma.to_f64())?;
        let names: Vec<String> = self.argmax.iter().map(|i| format!("alpha_{}", i + 1)).collect();
        st.serialize_field("argmax_set", &names)?;
        st.serialize_field("multiplicity", &self.multiplicity)?;
        st.end()
    }
}

/// Root coordinates of `-K_X = L(2 rho + sum alpha)`.
pub fn anticanonical(datum: &RootDatum) -> SVector {
    SVector::new(datum.kappa.iter().map(|&k| Rational64::from_integer(k + 1)).collect())
}

pub fn is_effective_interior(datum: &RootDatum, l: &SVector) -> bool {
    l.len() == datum.rank && l.values().iter().all(|x| x.is_positive())
}

/// `a(L) = sigma = max (kappa_alpha + 1)/s_alpha`, with `b(L)` the number of
/// roots attaining it.
pub fn manin_invariants(datum: &RootDatum, l: &SVector) -> Result<PoleData> {
    l.check_rank(datum)?;
    if !is_effective_interior(datum, l) {
        return invalid(format!("class ({l}) is not in the interior of the effective cone"));
    }
    let ratios: Vec<Rational64> = datum
        .kappa
        .iter()
        .zip(l.values())
        .map(|(&k, s)| Rational64::from_integer(k + 1) / s)
        .collect();
    let sigma = *ratios.iter().max().expect("rank >= 1");
    let argmax: Vec<usize> = (0..ratios.len()).filter(|&i| ratios[i] == sigma).collect();
    Ok(PoleData {
        sigma,
        multiplicity: argmax.len(),
        argmax,
    })
}

/// `d = gcd(n, gcd_{i in S(L)} i)`: the characters `chi = xi o det` with
/// `chi^d = 1` are the ones contributing to the pole.
pub fn character_count_pgl(n: usize, l: &SVector) -> Result<u64> {
    let datum = crate::rootsys::build_pgl(n)?;
    let Some(ints) = l.as_integers() else {
        return invalid(format!("class ({l}) must have integer coordinates"));
    };
    if ints.iter().any(|&x| x <= 0) {
        return invalid(format!("class ({l}) must have positive coordinates"));
    }
    let pole = manin_invariants(&datum, l)?;
    let d = pole
        .argmax
        .iter()
        .fold(n as u64, |g, &i| g.gcd(&(i as u64 + 1)));
    Ok(d)
}

/// `sigma * L + K_X` in root coordinates; nonnegative, vanishing exactly on
/// the maximizing roots.
pub fn adjoint_class(datum: &RootDatum, l: &SVector, sigma: Rational64) -> SVector {
    SVector::new(
        l.values()
            .iter()
            .zip(&datum.kappa)
            .map(|(s, &k)| sigma * s - Rational64::from_integer(k + 1))
            .collect(),
    )
}

pub fn vanishing_coordinates(class: &SVector) -> usize {
    class.values().iter().filter(|x| x.is_zero()).count()
}
