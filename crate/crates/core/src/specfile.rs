//! JSON interchange format for groupoids, Fell bundles, demi-equivalences and
//! equivalences. Complex numbers are `[re, im]`, all indices are 0-based, and every
//! tensor is a flat row-major array over `(left, right, out)`.

use serde::{Deserialize, Serialize};

use crate::cstar::BlockAlgebra;
use crate::demiequiv::DemiEquivalence;
use crate::error::{Error, Result};
use crate::fellbundle::FellBundle;
use crate::groupoid::{FiniteGroupoid, LeftAction, PrincipalAction};
use crate::imprimitivity::Equivalence;
use crate::linalg::{Bilinear, CMat, C64};

/// Identifier written to and required in the `format` field.
pub const FORMAT: &str = "imprim-spec/1";

type Complex = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupoidSpec {
    pub n_units: usize,
    pub src: Vec<usize>,
    pub rng: Vec<usize>,
    pub inv: Vec<usize>,
    pub unit_embed: Vec<usize>,
    /// Triples `[g, h, gh]`, one per composable pair.
    pub comp: Vec<[usize; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub n_points: usize,
    pub sigma: Vec<usize>,
    /// Triples `[x, h, x·h]`.
    pub act: Vec<[usize; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeftActionSpec {
    pub n_points: usize,
    pub anchor: Vec<usize>,
    /// Triples `[g, y, g·y]`.
    pub act: Vec<[usize; 3]>,
}

/// A bilinear tensor attached to an index pair; `data` has `dl·dr·dout` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorSpec {
    pub left: usize,
    pub right: usize,
    pub data: Vec<Complex>,
}

/// A matrix attached to an arrow, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub arrow: usize,
    pub data: Vec<Complex>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FellBundleSpec {
    /// Block sizes of `B(u)` per unit.
    pub unit_fibres: Vec<Vec<usize>>,
    pub dims: Vec<usize>,
    /// `B(g) × B(h) → B(gh)` with `left = g`, `right = h`.
    pub mult: Vec<TensorSpec>,
    /// `J_g` (`dims[g⁻¹] × dims[g]`) with `b* = J_g·conj(b)`.
    pub invol: Vec<MatrixSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemiSpec {
    pub dims: Vec<usize>,
    /// `M(x) × B(h) → M(x·h)` with `left = x`, `right = h`.
    pub ract: Vec<TensorSpec>,
    /// `M(x) × M(y) → B(reoq(x, y))`, conjugate-linear in the left slot.
    pub rip: Vec<TensorSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceSpec {
    pub groupoid: GroupoidSpec,
    pub fell_bundle: FellBundleSpec,
    pub left_action: LeftActionSpec,
    /// `A(g) × M(y) → M(g·y)` with `left = g`, `right = y`.
    pub left_action_tensors: Vec<TensorSpec>,
    /// `M(x) × M(y) → A(leoq(x, y))`, conjugate-linear in the right slot.
    pub left_inner: Vec<TensorSpec>,
}

/// Top-level file: a Fell bundle over a groupoid, optionally a demi-equivalence over
/// it, and optionally an equivalence completing that demi-equivalence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSpecFile {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub groupoid: GroupoidSpec,
    pub fell_bundle: FellBundleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demi_equivalence: Option<DemiSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence: Option<EquivalenceSpec>,
}

fn enc(z: &C64) -> Complex {
    [z.re, z.im]
}

fn dec(z: &Complex) -> C64 {
    C64::new(z[0], z[1])
}

fn tensor_spec(left: usize, right: usize, t: &Bilinear) -> TensorSpec {
    TensorSpec {
        left,
        right,
        data: t.data.iter().map(enc).collect(),
    }
}

fn tensor(t: &TensorSpec, dl: usize, dr: usize, dout: usize, what: &str) -> Result<Bilinear> {
    Bilinear::from_data(dl, dr, dout, t.data.iter().map(dec).collect()).ok_or_else(|| {
        Error::structural(format!(
            "{what} ({}, {}) has {} entries, expected {dl}·{dr}·{dout} = {}",
            t.left,
            t.right,
            t.data.len(),
            dl * dr * dout
        ))
    })
}

/// Places entries of a sparse list into a dense `rows × cols` table, rejecting
/// out-of-range and duplicate keys.
fn place<T>(
    table: &mut [Option<T>],
    cols: usize,
    rows: usize,
    l: usize,
    r: usize,
    v: T,
    what: &str,
) -> Result<()> {
    if l >= rows || r >= cols {
        return Err(Error::structural(format!(
            "{what} index ({l}, {r}) out of range"
        )));
    }
    let slot = &mut table[l * cols + r];
    if slot.is_some() {
        return Err(Error::structural(format!(
            "duplicate {what} entry ({l}, {r})"
        )));
    }
    *slot = Some(v);
    Ok(())
}

fn triples(table: &[Option<usize>], cols: usize) -> Vec<[usize; 3]> {
    table
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|c| [i / cols, i % cols, c]))
        .collect()
}

impl GroupoidSpec {
    pub fn from_groupoid(g: &FiniteGroupoid) -> Self {
        GroupoidSpec {
            n_units: g.n_units,
            src: g.src.clone(),
            rng: g.rng.clone(),
            inv: g.inv.clone(),
            unit_embed: g.unit_embed.clone(),
            comp: triples(&g.comp, g.n_arrows()),
        }
    }

    pub fn to_groupoid(&self) -> Result<FiniteGroupoid> {
        let n = self.src.len();
        let mut comp = vec![None; n * n];
        for &[a, b, c] in &self.comp {
            place(&mut comp, n, n, a, b, c, "composition")?;
        }
        FiniteGroupoid::from_tables(
            self.n_units,
            self.src.clone(),
            self.rng.clone(),
            self.inv.clone(),
            self.unit_embed.clone(),
            comp,
        )
    }
}

impl ActionSpec {
    pub fn from_action(a: &PrincipalAction) -> Self {
        ActionSpec {
            n_points: a.n_points,
            sigma: a.sigma.clone(),
            act: triples(&a.act, a.n_arrows),
        }
    }

    pub fn to_action(&self, g: &FiniteGroupoid) -> Result<PrincipalAction> {
        if self.sigma.len() != self.n_points {
            return Err(Error::structural("sigma must have one entry per point"));
        }
        let na = g.n_arrows();
        let mut act = vec![None; self.n_points * na];
        for &[x, h, y] in &self.act {
            place(&mut act, na, self.n_points, x, h, y, "action")?;
        }
        PrincipalAction::from_tables(g, self.sigma.clone(), act)
    }
}

impl LeftActionSpec {
    pub fn from_action(a: &LeftAction) -> Self {
        LeftActionSpec {
            n_points: a.n_points,
            anchor: a.anchor.clone(),
            act: triples(&a.act, a.n_points),
        }
    }

    pub fn to_action(&self, g: &FiniteGroupoid) -> Result<LeftAction> {
        if self.anchor.len() != self.n_points {
            return Err(Error::structural("anchor must have one entry per point"));
        }
        if let Some(u) = self.anchor.iter().find(|&&u| u >= g.n_units) {
            return Err(Error::structural(format!("anchor value {u} out of range")));
        }
        let na = g.n_arrows();
        let np = self.n_points;
        let mut act = vec![None; na * np];
        for &[a, y, x] in &self.act {
            if x >= np {
                return Err(Error::structural(format!("point index {x} out of range")));
            }
            place(&mut act, np, na, a, y, x, "left action")?;
        }
        Ok(LeftAction {
            n_points: np,
            n_arrows: na,
            anchor: self.anchor.clone(),
            act,
        })
    }
}

impl FellBundleSpec {
    pub fn from_bundle(fb: &FellBundle) -> Self {
        let n = fb.n_arrows();
        let mult = fb
            .mult
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.as_ref().map(|t| tensor_spec(i / n, i % n, t)))
            .collect();
        let invol = fb
            .invol
            .iter()
            .enumerate()
            .map(|(g, j)| MatrixSpec {
                arrow: g,
                data: (0..j.nrows())
                    .flat_map(|r| (0..j.ncols()).map(move |c| enc(&j[(r, c)])))
                    .collect(),
            })
            .collect();
        FellBundleSpec {
            unit_fibres: fb.unit_fibres.iter().map(|a| a.blocks.clone()).collect(),
            dims: fb.dims.clone(),
            mult,
            invol,
        }
    }

    pub fn to_bundle(&self, g: &FiniteGroupoid) -> Result<FellBundle> {
        let n = g.n_arrows();
        if self.dims.len() != n {
            return Err(Error::structural(format!(
                "{} fibre dimensions for {n} arrows",
                self.dims.len()
            )));
        }
        let algs = self
            .unit_fibres
            .iter()
            .map(|b| BlockAlgebra::new(b.clone()))
            .collect::<Result<Vec<_>>>()?;
        let mut mult = vec![None; n * n];
        for t in &self.mult {
            let out = g.try_comp(t.left, t.right).ok_or_else(|| {
                Error::structural(format!(
                    "multiplication tensor for non-composable pair ({}, {})",
                    t.left, t.right
                ))
            })?;
            let b = tensor(
                t,
                self.dims[t.left],
                self.dims[t.right],
                self.dims[out],
                "multiplication tensor",
            )?;
            place(&mut mult, n, n, t.left, t.right, b, "multiplication")?;
        }
        let mut invol: Vec<Option<CMat>> = vec![None; n];
        for m in &self.invol {
            if m.arrow >= n {
                return Err(Error::structural(format!(
                    "involution arrow {} out of range",
                    m.arrow
                )));
            }
            let (r, c) = (self.dims[g.inv[m.arrow]], self.dims[m.arrow]);
            if m.data.len() != r * c {
                return Err(Error::structural(format!(
                    "involution matrix at arrow {} must have {} entries",
                    m.arrow,
                    r * c
                )));
            }
            place(
                &mut invol,
                1,
                n,
                m.arrow,
                0,
                CMat::from_row_iterator(r, c, m.data.iter().map(dec)),
                "involution",
            )?;
        }
        let invol = invol
            .into_iter()
            .enumerate()
            .map(|(g, j)| {
                j.ok_or_else(|| {
                    Error::structural(format!("missing involution matrix at arrow {g}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FellBundle::new(g.clone(), algs, self.dims.clone(), mult, invol)
    }
}

impl DemiSpec {
    pub fn from_demi(m: &DemiEquivalence) -> Self {
        let (np, na) = (m.n_points(), m.n_arrows());
        let ract = m
            .ract
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.as_ref().map(|t| tensor_spec(i / na, i % na, t)))
            .collect();
        let rip = m
            .rip
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.as_ref().map(|t| tensor_spec(i / np, i % np, t)))
            .collect();
        DemiSpec {
            dims: m.dims.clone(),
            ract,
            rip,
        }
    }

    pub fn to_demi(&self, fb: &FellBundle, action: &PrincipalAction) -> Result<DemiEquivalence> {
        let (np, na) = (action.n_points, fb.n_arrows());
        if self.dims.len() != np {
            return Err(Error::structural(format!(
                "{} module dimensions for {np} points",
                self.dims.len()
            )));
        }
        let mut ract = vec![None; np * na];
        for t in &self.ract {
            let xh = (t.left < np && t.right < na)
                .then(|| action.try_act(t.left, t.right))
                .flatten()
                .ok_or_else(|| {
                    Error::structural(format!(
                        "right action tensor for undefined pair ({}, {})",
                        t.left, t.right
                    ))
                })?;
            let b = tensor(
                t,
                self.dims[t.left],
                fb.dims[t.right],
                self.dims[xh],
                "right action tensor",
            )?;
            place(&mut ract, na, np, t.left, t.right, b, "right action")?;
        }
        let mut rip = vec![None; np * np];
        for t in &self.rip {
            let h = (t.left < np && t.right < np)
                .then(|| action.find_translation(t.left, t.right))
                .flatten()
                .ok_or_else(|| {
                    Error::structural(format!(
                        "inner product tensor for points ({}, {}) in different orbits",
                        t.left, t.right
                    ))
                })?;
            let b = tensor(
                t,
                self.dims[t.left],
                self.dims[t.right],
                fb.dims[h],
                "inner product tensor",
            )?;
            place(&mut rip, np, np, t.left, t.right, b, "inner product")?;
        }
        DemiEquivalence::new(fb.clone(), action.clone(), self.dims.clone(), ract, rip)
    }
}

impl EquivalenceSpec {
    pub fn from_equivalence(e: &Equivalence) -> Self {
        let np = e.demi.n_points();
        let list = |v: &[Option<Bilinear>]| -> Vec<TensorSpec> {
            v.iter()
                .enumerate()
                .filter_map(|(i, t)| t.as_ref().map(|t| tensor_spec(i / np, i % np, t)))
                .collect()
        };
        EquivalenceSpec {
            groupoid: GroupoidSpec::from_groupoid(&e.bundle.base),
            fell_bundle: FellBundleSpec::from_bundle(&e.bundle),
            left_action: LeftActionSpec::from_action(&e.left),
            left_action_tensors: list(&e.left_action),
            left_inner: list(&e.left_inner),
        }
    }

    pub fn to_equivalence(&self, demi: &DemiEquivalence) -> Result<Equivalence> {
        let g = self.groupoid.to_groupoid()?;
        let bundle = self.fell_bundle.to_bundle(&g)?;
        let left = self.left_action.to_action(&g)?;
        let np = demi.n_points();
        if left.n_points != np {
            return Err(Error::structural(
                "left action and demi-equivalence have different point sets",
            ));
        }
        let na = g.n_arrows();
        let mut lact = vec![None; na * np];
        for t in &self.left_action_tensors {
            let y = (t.left < na && t.right < np)
                .then(|| left.try_act(t.left, t.right))
                .flatten()
                .ok_or_else(|| {
                    Error::structural(format!(
                        "left action tensor for undefined pair ({}, {})",
                        t.left, t.right
                    ))
                })?;
            let b = tensor(
                t,
                bundle.dims[t.left],
                demi.dims[t.right],
                demi.dims[y],
                "left action tensor",
            )?;
            place(&mut lact, np, na, t.left, t.right, b, "left action tensor")?;
        }
        let mut linner = vec![None; np * np];
        for t in &self.left_inner {
            let a = (t.left < np && t.right < np)
                .then(|| left.find_translation(t.left, t.right))
                .flatten()
                .ok_or_else(|| {
                    Error::structural(format!(
                        "left inner product for unrelated points ({}, {})",
                        t.left, t.right
                    ))
                })?;
            let b = tensor(
                t,
                demi.dims[t.left],
                demi.dims[t.right],
                bundle.dims[a],
                "left inner product tensor",
            )?;
            place(
                &mut linner,
                np,
                np,
                t.left,
                t.right,
                b,
                "left inner product",
            )?;
        }
        Equivalence::new(demi.clone(), bundle, left, lact, linner)
    }
}

impl BundleSpecFile {
    pub fn from_bundle(fb: &FellBundle) -> Self {
        BundleSpecFile {
            format: FORMAT.into(),
            tolerance: None,
            seed: None,
            groupoid: GroupoidSpec::from_groupoid(&fb.base),
            fell_bundle: FellBundleSpec::from_bundle(fb),
            action: None,
            demi_equivalence: None,
            equivalence: None,
        }
    }

    pub fn from_demi(m: &DemiEquivalence) -> Self {
        let mut s = Self::from_bundle(&m.bundle);
        s.action = Some(ActionSpec::from_action(&m.action));
        s.demi_equivalence = Some(DemiSpec::from_demi(m));
        s
    }

    pub fn from_equivalence(e: &Equivalence) -> Self {
        let mut s = Self::from_demi(&e.demi);
        s.equivalence = Some(EquivalenceSpec::from_equivalence(e));
        s
    }

    /// Parses and checks the format tag; any syntax or schema problem is structural.
    pub fn from_json(text: &str) -> Result<Self> {
        let s: BundleSpecFile =
            serde_json::from_str(text).map_err(|e| Error::structural(format!("spec file: {e}")))?;
        if s.format != FORMAT {
            return Err(Error::structural(format!(
                "unsupported format {:?}, expected {FORMAT:?}",
                s.format
            )));
        }
        if s.demi_equivalence.is_some() != s.action.is_some() {
            return Err(Error::structural(
                "action and demi_equivalence must be given together",
            ));
        }
        if s.equivalence.is_some() && s.demi_equivalence.is_none() {
            return Err(Error::structural(
                "an equivalence section requires a demi_equivalence",
            ));
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("spec serializes");
        out.push('\n');
        out
    }

    pub fn groupoid(&self) -> Result<FiniteGroupoid> {
        self.groupoid.to_groupoid()
    }

    pub fn fell_bundle(&self) -> Result<FellBundle> {
        self.fell_bundle.to_bundle(&self.groupoid()?)
    }

    pub fn action(&self) -> Result<Option<PrincipalAction>> {
        let g = self.groupoid()?;
        self.action.as_ref().map(|a| a.to_action(&g)).transpose()
    }

    pub fn demi(&self) -> Result<Option<DemiEquivalence>> {
        let (Some(a), Some(d)) = (&self.action, &self.demi_equivalence) else {
            return Ok(None);
        };
        let fb = self.fell_bundle()?;
        let action = a.to_action(&fb.base)?;
        d.to_demi(&fb, &action).map(Some)
    }

    pub fn equivalence(&self) -> Result<Option<Equivalence>> {
        let Some(e) = &self.equivalence else {
            return Ok(None);
        };
        let demi = self.demi()?.ok_or_else(|| {
            Error::structural("an equivalence section requires a demi_equivalence")
        })?;
        e.to_equivalence(&demi).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::applications::fixture_by_name;
    use crate::demiequiv::{random_demi, DemiProfile};

    #[test]
    fn demi_round_trip_is_exact() {
        let m = random_demi(4, &DemiProfile::default()).unwrap();
        let s = BundleSpecFile::from_demi(&m);
        let text = s.to_json();
        let back = BundleSpecFile::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.demi().unwrap().unwrap(), m);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn equivalence_round_trip() {
        let f = fixture_by_name("kumjian", "z2", 1).unwrap();
        let s = BundleSpecFile::from_equivalence(&f.expected);
        let back = BundleSpecFile::from_json(&s.to_json()).unwrap();
        let e = back.equivalence().unwrap().unwrap();
        assert_eq!(e.bundle, f.expected.bundle);
        assert_eq!(e.left_inner, f.expected.left_inner);
    }

    #[test]
    fn schema_errors_are_structural() {
        let m = random_demi(1, &DemiProfile::default()).unwrap();
        let text = BundleSpecFile::from_demi(&m).to_json();
        assert!(BundleSpecFile::from_json(&text[..text.len() / 2])
            .unwrap_err()
            .is_structural());
        let bad = text.replace(FORMAT, "other/0");
        assert!(BundleSpecFile::from_json(&bad).unwrap_err().is_structural());
        let mut s = BundleSpecFile::from_demi(&m);
        s.fell_bundle.mult[0].data.pop();
        assert!(s.fell_bundle().unwrap_err().is_structural());
        let mut s = BundleSpecFile::from_demi(&m);
        let dup = s.demi_equivalence.as_ref().unwrap().ract[0].clone();
        s.demi_equivalence.as_mut().unwrap().ract.push(dup);
        assert!(s.demi().unwrap_err().is_structural());
    }
}
