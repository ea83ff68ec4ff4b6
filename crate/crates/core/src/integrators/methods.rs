//! Method catalog: tableaux, stage patterns, correction terms and order conditions.

use std::fmt;
use std::str::FromStr;

use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expkernels::MatrixFunction;
use crate::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodId {
    #[serde(rename = "MVERK1")]
    Mverk1,
    #[serde(rename = "MVERK2_1")]
    Mverk2_1,
    #[serde(rename = "MVERK2_2")]
    Mverk2_2,
    #[serde(rename = "MVERK3_1")]
    Mverk3_1,
    #[serde(rename = "MVERK3_2")]
    Mverk3_2,
    #[serde(rename = "SVERK2_1")]
    Sverk2_1,
    #[serde(rename = "SVERK2_2")]
    Sverk2_2,
    #[serde(rename = "SVERK3_1")]
    Sverk3_1,
    #[serde(rename = "SVERK3_2")]
    Sverk3_2,
    #[serde(rename = "EEULER")]
    EEuler,
    #[serde(rename = "ERK2")]
    Erk2,
    #[serde(rename = "ERK3")]
    Erk3,
}

impl MethodId {
    pub const ALL: [MethodId; 12] = [
        MethodId::Mverk1,
        MethodId::Mverk2_1,
        MethodId::Mverk2_2,
        MethodId::Mverk3_1,
        MethodId::Mverk3_2,
        MethodId::Sverk2_1,
        MethodId::Sverk2_2,
        MethodId::Sverk3_1,
        MethodId::Sverk3_2,
        MethodId::EEuler,
        MethodId::Erk2,
        MethodId::Erk3,
    ];

    /// The nine methods with exponential-free coefficients.
    pub const NEW_METHODS: [MethodId; 9] = [
        MethodId::Mverk1,
        MethodId::Mverk2_1,
        MethodId::Mverk2_2,
        MethodId::Mverk3_1,
        MethodId::Mverk3_2,
        MethodId::Sverk2_1,
        MethodId::Sverk2_2,
        MethodId::Sverk3_1,
        MethodId::Sverk3_2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Mverk1 => "MVERK1",
            MethodId::Mverk2_1 => "MVERK2_1",
            MethodId::Mverk2_2 => "MVERK2_2",
            MethodId::Mverk3_1 => "MVERK3_1",
            MethodId::Mverk3_2 => "MVERK3_2",
            MethodId::Sverk2_1 => "SVERK2_1",
            MethodId::Sverk2_2 => "SVERK2_2",
            MethodId::Sverk3_1 => "SVERK3_1",
            MethodId::Sverk3_2 => "SVERK3_2",
            MethodId::EEuler => "EEULER",
            MethodId::Erk2 => "ERK2",
            MethodId::Erk3 => "ERK3",
        }
    }

    pub fn family(self) -> Family {
        match self {
            MethodId::Mverk1
            | MethodId::Mverk2_1
            | MethodId::Mverk2_2
            | MethodId::Mverk3_1
            | MethodId::Mverk3_2 => Family::Mverk,
            MethodId::Sverk2_1 | MethodId::Sverk2_2 | MethodId::Sverk3_1 | MethodId::Sverk3_2 => {
                Family::Sverk
            }
            MethodId::EEuler | MethodId::Erk2 | MethodId::Erk3 => Family::ExponentialRk,
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        if norm == "SVERK1" {
            // one-stage SVERK is the modified exponential Euler method
            return Ok(MethodId::Mverk1);
        }
        MethodId::ALL
            .into_iter()
            .find(|id| id.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Classical internal stages, one exponential in the update.
    Mverk,
    /// Internal stages start from `e^{c h M} y0`, scalar coefficients.
    Sverk,
    /// Coefficients are combinations of φ-functions (baselines).
    ExponentialRk,
}

/// How an internal stage's starting value is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StagePattern {
    Identity,
    Exp(Rational),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    None,
    /// `(h²/2) M f(y0)`
    W2,
    /// `(h²/6) M (3 f(y0) + h (M f(y0) + f'(y0) g0))`
    W3,
    /// Same as `W2`.
    W2Tilde,
    /// `(h²/2) M f(y0) + (h³/6) ((M + f'(y0)) M f(y0) + M f'(y0) g0)`
    W3Tilde,
    /// Baselines carry no additive correction; their φ-weights do the work.
    BaselinePhi,
}

impl Correction {
    pub fn needs_jacobian(self) -> bool {
        matches!(self, Correction::W3 | Correction::W3Tilde)
    }
}

/// `Σ coeff · φ_k(c h M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiCombination(pub Vec<PhiTerm>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiTerm {
    pub coeff: Rational,
    pub order: u8,
    pub node: Rational,
}

impl PhiCombination {
    pub fn single(coeff: Rational, order: u8, node: Rational) -> Self {
        PhiCombination(vec![PhiTerm { coeff, order, node }])
    }

    pub fn plus(mut self, coeff: Rational, order: u8, node: Rational) -> Self {
        self.0.push(PhiTerm { coeff, order, node });
        self
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|t| t.coeff.is_zero())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    Scalar {
        a: Vec<Vec<Rational>>,
        b: Vec<Rational>,
        a_f64: Vec<Vec<f64>>,
        b_f64: Vec<f64>,
    },
    Phi {
        a: Vec<Vec<PhiCombination>>,
        b: Vec<PhiCombination>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    id: MethodId,
    family: Family,
    nodes: Vec<Rational>,
    coefficients: Coefficients,
    patterns: Vec<StagePattern>,
    correction: Correction,
    order: u32,
}

fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

fn to_f64(x: Rational) -> f64 {
    x.to_f64().expect("coefficient fits in f64")
}

impl MethodSpec {
    /// Builds an MVERK or SVERK spec from its scalar tableau. Nodes are the row sums of `a`.
    pub fn scalar(
        id: MethodId,
        family: Family,
        a: Vec<Vec<Rational>>,
        b: Vec<Rational>,
        correction: Correction,
        order: u32,
    ) -> Result<Self> {
        let s = b.len();
        if s == 0 || a.len() != s || a.iter().any(|row| row.len() != s) {
            return Err(Error::Dimension(format!(
                "tableau for {id} must be {s}x{s} with {s} weights"
            )));
        }
        for (i, row) in a.iter().enumerate() {
            if row[i..].iter().any(|x| !x.is_zero()) {
                return Err(Error::Unsupported(format!(
                    "{id}: only explicit (strictly lower-triangular) tableaux are supported"
                )));
            }
        }
        let nodes: Vec<Rational> = a
            .iter()
            .map(|row| row.iter().fold(Rational::zero(), |acc, x| acc + x))
            .collect();
        let patterns = match family {
            Family::Mverk => vec![StagePattern::Identity; s],
            Family::Sverk => nodes
                .iter()
                .map(|&c| {
                    if c.is_zero() {
                        StagePattern::Identity
                    } else {
                        StagePattern::Exp(c)
                    }
                })
                .collect(),
            Family::ExponentialRk => {
                return Err(Error::Unsupported(
                    "φ-coefficient methods are built with MethodSpec::phi".into(),
                ))
            }
        };
        let a_f64 = a
            .iter()
            .map(|row| row.iter().map(|&x| to_f64(x)).collect())
            .collect();
        let b_f64 = b.iter().map(|&x| to_f64(x)).collect();
        Ok(MethodSpec {
            id,
            family,
            nodes,
            coefficients: Coefficients::Scalar { a, b, a_f64, b_f64 },
            patterns,
            correction,
            order,
        })
    }

    fn phi(
        id: MethodId,
        nodes: Vec<Rational>,
        a: Vec<Vec<PhiCombination>>,
        b: Vec<PhiCombination>,
        order: u32,
    ) -> Self {
        let patterns = nodes
            .iter()
            .map(|&c| {
                if c.is_zero() {
                    StagePattern::Identity
                } else {
                    StagePattern::Exp(c)
                }
            })
            .collect();
        MethodSpec {
            id,
            family: Family::ExponentialRk,
            nodes,
            coefficients: Coefficients::Phi { a, b },
            patterns,
            correction: Correction::BaselinePhi,
            order,
        }
    }

    pub fn id(&self) -> MethodId {
        self.id
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn stages(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Rational] {
        &self.nodes
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coefficients
    }

    pub fn patterns(&self) -> &[StagePattern] {
        &self.patterns
    }

    pub fn correction(&self) -> Correction {
        self.correction
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn requires_jacobian(&self) -> bool {
        self.correction.needs_jacobian()
    }

    /// Scalar weights, when the method has them.
    pub fn weights(&self) -> Option<&[Rational]> {
        match &self.coefficients {
            Coefficients::Scalar { b, .. } => Some(b),
            Coefficients::Phi { .. } => None,
        }
    }

    /// Matrix functions a step needs, i.e. what a cache must hold before the time loop.
    pub fn required_functions(&self) -> Vec<(MatrixFunction, Rational)> {
        let mut out = vec![(MatrixFunction::Exp, Rational::one())];
        for p in &self.patterns {
            if let StagePattern::Exp(c) = p {
                out.push((MatrixFunction::Exp, *c));
            }
        }
        if let Coefficients::Phi { a, b } = &self.coefficients {
            for comb in a.iter().flatten().chain(b.iter()) {
                for t in &comb.0 {
                    if !t.coeff.is_zero() {
                        out.push((MatrixFunction::Phi(t.order), t.node));
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

/// Exact tableau for a shipped method.
pub fn method_spec(id: MethodId) -> MethodSpec {
    let z = Rational::zero();
    let one = Rational::one();
    let scalar = |family, a, b, corr, p| {
        MethodSpec::scalar(id, family, a, b, corr, p).expect("catalog tableau is well formed")
    };
    match id {
        MethodId::Mverk1 => scalar(Family::Mverk, vec![vec![z]], vec![one], Correction::None, 1),
        MethodId::Mverk2_1 => scalar(
            Family::Mverk,
            vec![vec![z, z], vec![one, z]],
            vec![r(1, 2), r(1, 2)],
            Correction::W2,
            2,
        ),
        MethodId::Mverk2_2 => scalar(
            Family::Mverk,
            vec![vec![z, z], vec![r(1, 2), z]],
            vec![z, one],
            Correction::W2,
            2,
        ),
        MethodId::Mverk3_1 => scalar(
            Family::Mverk,
            vec![vec![z, z, z], vec![r(1, 3), z, z], vec![z, r(2, 3), z]],
            vec![r(1, 4), z, r(3, 4)],
            Correction::W3,
            3,
        ),
        MethodId::Mverk3_2 => scalar(
            Family::Mverk,
            vec![vec![z, z, z], vec![r(1, 2), z, z], vec![z, r(3, 4), z]],
            vec![r(2, 9), r(3, 9), r(4, 9)],
            Correction::W3,
            3,
        ),
        MethodId::Sverk2_1 => scalar(
            Family::Sverk,
            vec![vec![z, z], vec![one, z]],
            vec![r(1, 2), r(1, 2)],
            Correction::W2Tilde,
            2,
        ),
        MethodId::Sverk2_2 => scalar(
            Family::Sverk,
            vec![vec![z, z], vec![r(1, 2), z]],
            vec![z, one],
            Correction::W2Tilde,
            2,
        ),
        MethodId::Sverk3_1 => scalar(
            Family::Sverk,
            vec![vec![z, z, z], vec![r(1, 2), z, z], vec![z, r(3, 4), z]],
            vec![r(2, 9), r(3, 9), r(4, 9)],
            Correction::W3Tilde,
            3,
        ),
        MethodId::Sverk3_2 => scalar(
            Family::Sverk,
            vec![vec![z, z, z], vec![r(1, 3), z, z], vec![z, r(2, 3), z]],
            vec![r(1, 4), z, r(3, 4)],
            Correction::W3Tilde,
            3,
        ),
        MethodId::EEuler => MethodSpec::phi(
            id,
            vec![z],
            vec![vec![]],
            vec![PhiCombination::single(one, 1, one)],
            1,
        ),
        // Second-order exponential RK with c2 = 1/2.
        MethodId::Erk2 => {
            let c2 = r(1, 2);
            let inv = one / c2;
            MethodSpec::phi(
                id,
                vec![z, c2],
                vec![vec![], vec![PhiCombination::single(c2, 1, c2)]],
                vec![
                    PhiCombination::single(one, 1, one).plus(-inv, 2, one),
                    PhiCombination::single(inv, 2, one),
                ],
                2,
            )
        }
        // Three-stage third-order exponential RK of Heun type (c2 = 1/3, c3 = 2/3).
        MethodId::Erk3 => {
            let (c2, c3) = (r(1, 3), r(2, 3));
            MethodSpec::phi(
                id,
                vec![z, c2, c3],
                vec![
                    vec![],
                    vec![PhiCombination::single(c2, 1, c2)],
                    vec![
                        PhiCombination::single(c3, 1, c3).plus(r(-4, 3), 2, c3),
                        PhiCombination::single(r(4, 3), 2, c3),
                    ],
                ],
                vec![
                    PhiCombination::single(one, 1, one).plus(r(-3, 2), 2, one),
                    PhiCombination(vec![]),
                    PhiCombination::single(r(3, 2), 2, one),
                ],
                3,
            )
        }
    }
}

/// Left-minus-right values of the order conditions, evaluated exactly and
/// converted to floating point at the end.
pub fn order_residuals(spec: &MethodSpec) -> Result<Vec<f64>> {
    let (a, b) = match spec.coefficients() {
        Coefficients::Scalar { a, b, .. } => (a, b),
        Coefficients::Phi { .. } => {
            return Err(Error::Unsupported(format!(
                "{} has matrix-valued coefficients",
                spec.id()
            )))
        }
    };
    let c = spec.nodes();
    let one = Rational::one();
    let sum_b = b.iter().fold(Rational::zero(), |acc, x| acc + x);
    let exact = match b.len() {
        1 => vec![sum_b - one],
        2 => vec![sum_b - one, r(2, 1) * a[1][0] * b[1] - one],
        3 => vec![
            sum_b - one,
            b[1] * c[1] + b[2] * c[2] - r(1, 2),
            b[1] * c[1] * c[1] + b[2] * c[2] * c[2] - r(1, 3),
            b[2] * a[2][1] * a[1][0] - r(1, 6),
        ],
        s => {
            return Err(Error::Unsupported(format!(
                "order conditions for {s} stages"
            )))
        }
    };
    Ok(exact.into_iter().map(to_f64).collect())
}
