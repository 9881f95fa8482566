//! Finite groupoids, free right actions, and the imprimitivity groupoid `X ×_H X^op`.

use crate::error::{Error, Result};
use crate::report::ValidationReport;

/// A finite groupoid given by explicit tables. Arrows and units are `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteGroupoid {
    pub n_units: usize,
    pub src: Vec<usize>,
    pub rng: Vec<usize>,
    pub inv: Vec<usize>,
    pub unit_embed: Vec<usize>,
    /// Row-major `n_arrows × n_arrows` table; `Some` exactly on composable pairs.
    pub comp: Vec<Option<usize>>,
}

impl FiniteGroupoid {
    /// Assembles a groupoid from tables, checking only shapes and index ranges.
    pub fn from_tables(
        n_units: usize,
        src: Vec<usize>,
        rng: Vec<usize>,
        inv: Vec<usize>,
        unit_embed: Vec<usize>,
        comp: Vec<Option<usize>>,
    ) -> Result<Self> {
        let n = src.len();
        if rng.len() != n || inv.len() != n {
            return Err(Error::structural(
                "src, rng and inv must have one entry per arrow",
            ));
        }
        if unit_embed.len() != n_units {
            return Err(Error::structural("unit_embed must have one entry per unit"));
        }
        if comp.len() != n * n {
            return Err(Error::structural(
                "composition table must be n_arrows × n_arrows",
            ));
        }
        if let Some(u) = src.iter().chain(rng.iter()).find(|&&u| u >= n_units) {
            return Err(Error::structural(format!("unit index {u} out of range")));
        }
        if let Some(a) = inv
            .iter()
            .chain(unit_embed.iter())
            .chain(comp.iter().flatten())
            .find(|&&a| a >= n)
        {
            return Err(Error::structural(format!("arrow index {a} out of range")));
        }
        Ok(FiniteGroupoid {
            n_units,
            src,
            rng,
            inv,
            unit_embed,
            comp,
        })
    }

    /// Builds a groupoid from a composition rule; the rule is consulted only on pairs
    /// with `src(g) = rng(h)`.
    pub fn from_rule(
        n_units: usize,
        src: Vec<usize>,
        rng: Vec<usize>,
        unit_embed: Vec<usize>,
        mut rule: impl FnMut(usize, usize) -> usize,
    ) -> Self {
        let n = src.len();
        let mut comp = vec![None; n * n];
        for g in 0..n {
            for h in 0..n {
                if src[g] == rng[h] {
                    comp[g * n + h] = Some(rule(g, h));
                }
            }
        }
        let inv = (0..n)
            .map(|g| {
                (0..n)
                    .find(|&h| src[g] == rng[h] && comp[g * n + h] == Some(unit_embed[rng[g]]))
                    .unwrap_or(g)
            })
            .collect();
        FiniteGroupoid {
            n_units,
            src,
            rng,
            inv,
            unit_embed,
            comp,
        }
    }

    pub fn n_arrows(&self) -> usize {
        self.src.len()
    }

    /// Composite `g·h`, or `None` when `src(g) ≠ rng(h)`.
    pub fn try_comp(&self, g: usize, h: usize) -> Option<usize> {
        let n = self.n_arrows();
        if g >= n || h >= n {
            return None;
        }
        self.comp[g * n + h]
    }

    /// Domain-checked composite; an out-of-domain lookup is a structural error.
    pub fn comp(&self, g: usize, h: usize) -> Result<usize> {
        self.try_comp(g, h)
            .ok_or_else(|| Error::structural(format!("arrows ({g}, {h}) are not composable")))
    }

    pub fn is_unit_arrow(&self, g: usize) -> bool {
        self.unit_embed[self.src[g]] == g
    }

    /// Unit index of a unit arrow.
    pub fn unit_of_arrow(&self, g: usize) -> Option<usize> {
        self.unit_embed.iter().position(|&a| a == g)
    }

    /// Arrows `h` with `src(h) = u`, in index order.
    pub fn arrows_with_src(&self, u: usize) -> Vec<usize> {
        (0..self.n_arrows()).filter(|&h| self.src[h] == u).collect()
    }

    /// Arrows `h` with `rng(h) = u`, in index order.
    pub fn arrows_with_rng(&self, u: usize) -> Vec<usize> {
        (0..self.n_arrows()).filter(|&h| self.rng[h] == u).collect()
    }

    /// Composable pairs `(g, h)` in row-major order.
    pub fn composable_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_arrows();
        let mut out = Vec::new();
        for g in 0..n {
            for h in 0..n {
                if self.comp[g * n + h].is_some() {
                    out.push((g, h));
                }
            }
        }
        out
    }

    /// Connected components of the unit space, each listed in index order.
    pub fn unit_components(&self) -> Vec<usize> {
        let mut comp: Vec<usize> = (0..self.n_units).collect();
        fn find(c: &mut [usize], mut u: usize) -> usize {
            while c[u] != u {
                c[u] = c[c[u]];
                u = c[u];
            }
            u
        }
        for g in 0..self.n_arrows() {
            let a = find(&mut comp, self.src[g]);
            let b = find(&mut comp, self.rng[g]);
            if a != b {
                let (lo, hi) = (a.min(b), a.max(b));
                comp[hi] = lo;
            }
        }
        (0..self.n_units).map(|u| find(&mut comp, u)).collect()
    }

    /// The one-arrow groupoid.
    pub fn point() -> Self {
        FiniteGroupoid::trivial(1)
    }

    /// A groupoid with `n` units and no other arrows.
    pub fn trivial(n: usize) -> Self {
        FiniteGroupoid::from_rule(
            n,
            (0..n).collect(),
            (0..n).collect(),
            (0..n).collect(),
            |g, _| g,
        )
    }

    /// A finite group from its multiplication table; element 0 must be the identity.
    pub fn group(table: &[Vec<usize>]) -> Self {
        let n = table.len();
        FiniteGroupoid::from_rule(1, vec![0; n], vec![0; n], vec![0], |g, h| table[g][h])
    }

    /// The cyclic group `Z/n` written additively.
    pub fn cyclic(n: usize) -> Self {
        let table: Vec<Vec<usize>> = (0..n)
            .map(|a| (0..n).map(|b| (a + b) % n).collect())
            .collect();
        FiniteGroupoid::group(&table)
    }

    /// The Klein four-group `Z/2 × Z/2`, elements encoded as two bits.
    pub fn klein() -> Self {
        let table: Vec<Vec<usize>> = (0..4).map(|a| (0..4).map(|b| a ^ b).collect()).collect();
        FiniteGroupoid::group(&table)
    }

    /// The symmetric group on three letters, elements in lexicographic permutation order.
    pub fn symmetric3() -> Self {
        let perms: Vec<[usize; 3]> = vec![
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let idx = |p: [usize; 3]| {
            perms
                .iter()
                .position(|q| *q == p)
                .expect("permutation listed")
        };
        let table: Vec<Vec<usize>> = perms
            .iter()
            .map(|a| {
                perms
                    .iter()
                    .map(|b| idx([a[b[0]], a[b[1]], a[b[2]]]))
                    .collect()
            })
            .collect();
        FiniteGroupoid::group(&table)
    }

    /// The pair groupoid on `n` points; arrow `(i, j)` has index `i·n + j`, range `i`, source `j`.
    pub fn pair(n: usize) -> Self {
        let src = (0..n * n).map(|a| a % n).collect();
        let rng = (0..n * n).map(|a| a / n).collect();
        let units = (0..n).map(|i| i * n + i).collect();
        FiniteGroupoid::from_rule(n, src, rng, units, |g, h| (g / n) * n + h % n)
    }

    /// Product groupoid; arrow `(a, b)` has index `a·|B| + b`.
    pub fn product(a: &FiniteGroupoid, b: &FiniteGroupoid) -> Self {
        let (na, nb) = (a.n_arrows(), b.n_arrows());
        let ub = b.n_units;
        let src = (0..na * nb)
            .map(|g| a.src[g / nb] * ub + b.src[g % nb])
            .collect();
        let rng = (0..na * nb)
            .map(|g| a.rng[g / nb] * ub + b.rng[g % nb])
            .collect();
        let units = (0..a.n_units * ub)
            .map(|u| a.unit_embed[u / ub] * nb + b.unit_embed[u % ub])
            .collect();
        FiniteGroupoid::from_rule(a.n_units * ub, src, rng, units, |g, h| {
            let x = a.try_comp(g / nb, h / nb).expect("composable");
            let y = b.try_comp(g % nb, h % nb).expect("composable");
            x * nb + y
        })
    }

    /// Disjoint union; arrows and units of `b` are shifted after those of `a`.
    pub fn disjoint_union(a: &FiniteGroupoid, b: &FiniteGroupoid) -> Self {
        let (na, ua) = (a.n_arrows(), a.n_units);
        let src = a
            .src
            .iter()
            .cloned()
            .chain(b.src.iter().map(|u| u + ua))
            .collect();
        let rng = a
            .rng
            .iter()
            .cloned()
            .chain(b.rng.iter().map(|u| u + ua))
            .collect();
        let units = a
            .unit_embed
            .iter()
            .cloned()
            .chain(b.unit_embed.iter().map(|g| g + na))
            .collect();
        FiniteGroupoid::from_rule(ua + b.n_units, src, rng, units, |g, h| {
            if g < na {
                a.try_comp(g, h).expect("composable")
            } else {
                b.try_comp(g - na, h - na).expect("composable") + na
            }
        })
    }

    /// Looks up a catalogue groupoid by name.
    pub fn named(name: &str) -> Option<Self> {
        Some(match name {
            "point" => FiniteGroupoid::point(),
            "z2" => FiniteGroupoid::cyclic(2),
            "z3" => FiniteGroupoid::cyclic(3),
            "z4" => FiniteGroupoid::cyclic(4),
            "z5" => FiniteGroupoid::cyclic(5),
            "z6" => FiniteGroupoid::cyclic(6),
            "klein" => FiniteGroupoid::klein(),
            "s3" => FiniteGroupoid::symmetric3(),
            "pair2" => FiniteGroupoid::pair(2),
            "two-points" => FiniteGroupoid::trivial(2),
            "point+z2" => {
                FiniteGroupoid::disjoint_union(&FiniteGroupoid::point(), &FiniteGroupoid::cyclic(2))
            }
            "pair2+point" => {
                FiniteGroupoid::disjoint_union(&FiniteGroupoid::pair(2), &FiniteGroupoid::point())
            }
            "z2+z2" => FiniteGroupoid::disjoint_union(
                &FiniteGroupoid::cyclic(2),
                &FiniteGroupoid::cyclic(2),
            ),
            "z3+z2" => FiniteGroupoid::disjoint_union(
                &FiniteGroupoid::cyclic(3),
                &FiniteGroupoid::cyclic(2),
            ),
            _ => return None,
        })
    }

    /// Names accepted by [`FiniteGroupoid::named`].
    pub const CATALOGUE: &'static [&'static str] = &[
        "point",
        "z2",
        "z3",
        "z4",
        "z5",
        "z6",
        "klein",
        "s3",
        "pair2",
        "two-points",
        "point+z2",
        "pair2+point",
        "z2+z2",
        "z3+z2",
    ];
}

/// Checks all groupoid axioms, reporting witnesses for every violation.
pub fn validate_groupoid(g: &FiniteGroupoid) -> ValidationReport {
    let mut rep = ValidationReport::new("groupoid", 0.0);
    if let Err(e) = FiniteGroupoid::from_tables(
        g.n_units,
        g.src.clone(),
        g.rng.clone(),
        g.inv.clone(),
        g.unit_embed.clone(),
        g.comp.clone(),
    ) {
        rep.structural_error(e.to_string());
        return rep;
    }
    let n = g.n_arrows();
    for label in [
        "GPD-DOMAIN",
        "GPD-SRCRNG",
        "GPD-ASSOC",
        "GPD-UNIT",
        "GPD-INV",
    ] {
        rep.declare(label);
    }
    for a in 0..n {
        for b in 0..n {
            let c = g.comp[a * n + b];
            rep.require("GPD-DOMAIN", &[a, b], c.is_some() == (g.src[a] == g.rng[b]));
            if let Some(c) = c {
                rep.require(
                    "GPD-SRCRNG",
                    &[a, b],
                    g.rng[c] == g.rng[a] && g.src[c] == g.src[b],
                );
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            let Some(ab) = g.comp[a * n + b] else {
                continue;
            };
            for c in 0..n {
                let Some(bc) = g.comp[b * n + c] else {
                    continue;
                };
                let lhs = g.try_comp(ab, c);
                let rhs = g.try_comp(a, bc);
                rep.require("GPD-ASSOC", &[a, b, c], lhs.is_some() && lhs == rhs);
            }
        }
    }
    for u in 0..g.n_units {
        let e = g.unit_embed[u];
        rep.require("GPD-UNIT", &[e], g.src[e] == u && g.rng[e] == u);
        for h in 0..n {
            if g.rng[h] == u {
                rep.require("GPD-UNIT", &[e, h], g.try_comp(e, h) == Some(h));
            }
            if g.src[h] == u {
                rep.require("GPD-UNIT", &[h, e], g.try_comp(h, e) == Some(h));
            }
        }
    }
    for h in 0..n {
        let i = g.inv[h];
        let ok = g.try_comp(i, h) == Some(g.unit_embed[g.src[h]])
            && g.try_comp(h, i) == Some(g.unit_embed[g.rng[h]])
            && g.inv[i] == h;
        rep.require("GPD-INV", &[h], ok);
    }
    rep
}

/// A right action of a finite groupoid on a finite set along an anchor map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrincipalAction {
    pub n_points: usize,
    pub sigma: Vec<usize>,
    /// Row-major `n_points × n_arrows` table; `Some` exactly when `sigma(x) = rng(h)`.
    pub act: Vec<Option<usize>>,
    pub n_arrows: usize,
}

impl PrincipalAction {
    pub fn from_tables(
        g: &FiniteGroupoid,
        sigma: Vec<usize>,
        act: Vec<Option<usize>>,
    ) -> Result<Self> {
        let n_points = sigma.len();
        let n_arrows = g.n_arrows();
        if act.len() != n_points * n_arrows {
            return Err(Error::structural(
                "action table must be n_points × n_arrows",
            ));
        }
        if let Some(u) = sigma.iter().find(|&&u| u >= g.n_units) {
            return Err(Error::structural(format!("anchor value {u} out of range")));
        }
        if let Some(x) = act.iter().flatten().find(|&&x| x >= n_points) {
            return Err(Error::structural(format!("point index {x} out of range")));
        }
        Ok(PrincipalAction {
            n_points,
            sigma,
            act,
            n_arrows,
        })
    }

    /// Right translation of a groupoid on its own arrows: `X = H`, `σ = src`.
    pub fn translation(g: &FiniteGroupoid) -> Self {
        let n = g.n_arrows();
        let act = (0..n * n).map(|i| g.try_comp(i / n, i % n)).collect();
        PrincipalAction {
            n_points: n,
            sigma: g.src.clone(),
            act,
            n_arrows: n,
        }
    }

    /// `x·h`, or `None` when `sigma(x) ≠ rng(h)`.
    pub fn try_act(&self, x: usize, h: usize) -> Option<usize> {
        if x >= self.n_points || h >= self.n_arrows {
            return None;
        }
        self.act[x * self.n_arrows + h]
    }

    /// Domain-checked action.
    pub fn act(&self, x: usize, h: usize) -> Result<usize> {
        self.try_act(x, h)
            .ok_or_else(|| Error::structural(format!("point {x} cannot be acted on by arrow {h}")))
    }

    /// The unique `h` with `x·h = y`, found by exhaustive search.
    pub fn find_translation(&self, x: usize, y: usize) -> Option<usize> {
        (0..self.n_arrows).find(|&h| self.try_act(x, h) == Some(y))
    }

    /// Orbit index of every point, orbits numbered by their least element.
    pub fn orbits(&self) -> Vec<usize> {
        let mut orbit = vec![usize::MAX; self.n_points];
        let mut next = 0;
        for x in 0..self.n_points {
            if orbit[x] != usize::MAX {
                continue;
            }
            for h in 0..self.n_arrows {
                if let Some(y) = self.try_act(x, h) {
                    orbit[y] = next;
                }
            }
            orbit[x] = next;
            next += 1;
        }
        orbit
    }

    /// Relabels points: old point `p` becomes `perm[p]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n_points;
        let mut sigma = vec![0; n];
        let mut act = vec![None; n * self.n_arrows];
        for p in 0..n {
            sigma[perm[p]] = self.sigma[p];
            for h in 0..self.n_arrows {
                act[perm[p] * self.n_arrows + h] = self.try_act(p, h).map(|q| perm[q]);
            }
        }
        PrincipalAction {
            n_points: n,
            sigma,
            act,
            n_arrows: self.n_arrows,
        }
    }
}

/// Checks that `a` is a free right action with surjective anchor.
pub fn validate_action(g: &FiniteGroupoid, a: &PrincipalAction) -> ValidationReport {
    let mut rep = ValidationReport::new("action", 0.0);
    if let Err(e) = PrincipalAction::from_tables(g, a.sigma.clone(), a.act.clone()) {
        rep.structural_error(e.to_string());
        return rep;
    }
    if a.n_arrows != g.n_arrows() {
        rep.structural_error("action arrow count differs from the groupoid");
        return rep;
    }
    for label in [
        "ACT-DOMAIN",
        "ACT-ANCHOR",
        "ACT-UNIT",
        "ACT-ASSOC",
        "ACT-FREE",
        "ACT-SURJ",
    ] {
        rep.declare(label);
    }
    let n = g.n_arrows();
    for x in 0..a.n_points {
        for h in 0..n {
            let y = a.try_act(x, h);
            rep.require(
                "ACT-DOMAIN",
                &[x, h],
                y.is_some() == (a.sigma[x] == g.rng[h]),
            );
            if let Some(y) = y {
                rep.require("ACT-ANCHOR", &[x, h], a.sigma[y] == g.src[h]);
                let unit = g.is_unit_arrow(h);
                if y == x {
                    rep.require("ACT-FREE", &[x, h], unit);
                }
                if unit {
                    rep.require("ACT-UNIT", &[x, h], y == x);
                }
                for k in 0..n {
                    if let Some(hk) = g.try_comp(h, k) {
                        let lhs = a.try_act(y, k);
                        rep.require(
                            "ACT-ASSOC",
                            &[x, h, k],
                            lhs.is_some() && lhs == a.try_act(x, hk),
                        );
                    }
                }
            }
        }
    }
    for u in 0..g.n_units {
        rep.require("ACT-SURJ", &[u], a.sigma.contains(&u));
    }
    rep.note(
        "ACT-FREE",
        "properness is automatic for finite discrete actions",
    );
    rep
}

/// A left action of a groupoid `G` on a set `X` along an anchor `ρ: X → G⁰`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeftAction {
    pub n_points: usize,
    pub n_arrows: usize,
    pub anchor: Vec<usize>,
    /// Row-major `n_arrows × n_points`; `Some` exactly when `src(g) = anchor(y)`.
    pub act: Vec<Option<usize>>,
}

impl LeftAction {
    pub fn try_act(&self, g: usize, y: usize) -> Option<usize> {
        if g >= self.n_arrows || y >= self.n_points {
            return None;
        }
        self.act[g * self.n_points + y]
    }

    pub fn act(&self, g: usize, y: usize) -> Result<usize> {
        self.try_act(g, y)
            .ok_or_else(|| Error::structural(format!("arrow {g} cannot act on point {y}")))
    }

    /// The unique arrow carrying `y` to `x`.
    pub fn find_translation(&self, x: usize, y: usize) -> Option<usize> {
        (0..self.n_arrows).find(|&g| self.try_act(g, y) == Some(x))
    }
}

/// Checks that `a` is a free left action of `g` with surjective anchor.
pub fn validate_left_action(g: &FiniteGroupoid, a: &LeftAction) -> ValidationReport {
    let mut rep = ValidationReport::new("left action", 0.0);
    if a.act.len() != a.n_points * a.n_arrows
        || a.n_arrows != g.n_arrows()
        || a.anchor.len() != a.n_points
    {
        rep.structural_error("left action table has the wrong shape");
        return rep;
    }
    if a.anchor.iter().any(|&u| u >= g.n_units) || a.act.iter().flatten().any(|&x| x >= a.n_points)
    {
        rep.structural_error("left action index out of range");
        return rep;
    }
    for label in [
        "LACT-DOMAIN",
        "LACT-ANCHOR",
        "LACT-UNIT",
        "LACT-ASSOC",
        "LACT-FREE",
        "LACT-SURJ",
    ] {
        rep.declare(label);
    }
    for h in 0..g.n_arrows() {
        for y in 0..a.n_points {
            let x = a.try_act(h, y);
            rep.require(
                "LACT-DOMAIN",
                &[h, y],
                x.is_some() == (g.src[h] == a.anchor[y]),
            );
            if let Some(x) = x {
                rep.require("LACT-ANCHOR", &[h, y], a.anchor[x] == g.rng[h]);
                if g.is_unit_arrow(h) {
                    rep.require("LACT-UNIT", &[h, y], x == y);
                } else if x == y {
                    rep.require("LACT-FREE", &[h, y], false);
                }
                for k in 0..g.n_arrows() {
                    if let Some(kh) = g.try_comp(k, h) {
                        let lhs = a.try_act(k, x);
                        rep.require(
                            "LACT-ASSOC",
                            &[k, h, y],
                            lhs.is_some() && lhs == a.try_act(kh, y),
                        );
                    }
                }
            }
        }
    }
    for u in 0..g.n_units {
        rep.require("LACT-SURJ", &[u], a.anchor.contains(&u));
    }
    rep
}

/// The groupoid `G = X ×_σ,σ X^op / H` with canonical orbit representatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImprimitivityGroupoid {
    pub base: FiniteGroupoid,
    pub n_points: usize,
    /// Lexicographically least pair in each arrow's orbit.
    pub rep: Vec<(usize, usize)>,
    /// Row-major `n_points × n_points`; `Some(g)` when `σ(x) = σ(y)`.
    pub class: Vec<Option<usize>>,
    /// `ρ(x)`: the unit of `G` holding the `H`-orbit of `x`.
    pub rho: Vec<usize>,
    /// Least point of each orbit.
    pub orbit_min: Vec<usize>,
    /// The left action `[x, y^op] ▷ y = x`.
    pub left: LeftAction,
    /// Row-major `n_points × n_points` table of translations `⟨x, y⟩_H`.
    pub reoq: Vec<Option<usize>>,
}

impl ImprimitivityGroupoid {
    /// `class_of(x, y)`, defined when `σ(x) = σ(y)`.
    pub fn class_of(&self, x: usize, y: usize) -> Option<usize> {
        self.class.get(x * self.n_points + y).copied().flatten()
    }

    /// The unique `h` with `x·h = y`, defined for points in the same orbit.
    pub fn reoq(&self, x: usize, y: usize) -> Option<usize> {
        self.reoq.get(x * self.n_points + y).copied().flatten()
    }
}

/// Builds the imprimitivity groupoid of a free action.
pub fn imprimitivity_groupoid(
    g: &FiniteGroupoid,
    a: &PrincipalAction,
) -> Result<ImprimitivityGroupoid> {
    let rg = validate_groupoid(g);
    if !rg.passed() {
        return Err(Error::axiom(format!("invalid groupoid\n{rg}")));
    }
    let ra = validate_action(g, a);
    if !ra.passed() {
        return Err(Error::axiom(format!("invalid action\n{ra}")));
    }
    let np = a.n_points;
    let rho = a.orbits();
    let n_orbits = rho.iter().cloned().max().map_or(0, |m| m + 1);
    let mut orbit_min = vec![usize::MAX; n_orbits];
    for x in (0..np).rev() {
        orbit_min[rho[x]] = x;
    }
    let mut reoq_t = vec![None; np * np];
    for x in 0..np {
        for h in 0..g.n_arrows() {
            if let Some(y) = a.try_act(x, h) {
                reoq_t[x * np + y] = Some(h);
            }
        }
    }
    let mut rep_of = vec![None; np * np];
    for x in 0..np {
        for y in 0..np {
            if a.sigma[x] != a.sigma[y] {
                continue;
            }
            let mut best = (x, y);
            for h in 0..g.n_arrows() {
                if let (Some(xh), Some(yh)) = (a.try_act(x, h), a.try_act(y, h)) {
                    best = best.min((xh, yh));
                }
            }
            rep_of[x * np + y] = Some(best);
        }
    }
    let mut reps: Vec<(usize, usize)> = rep_of.iter().flatten().cloned().collect();
    reps.sort();
    reps.dedup();
    let class: Vec<Option<usize>> = rep_of
        .iter()
        .map(|r| r.map(|p| reps.binary_search(&p).expect("representative listed")))
        .collect();
    let n = reps.len();
    let src: Vec<usize> = reps.iter().map(|&(_, y)| rho[y]).collect();
    let rng: Vec<usize> = reps.iter().map(|&(x, _)| rho[x]).collect();
    let unit_embed: Vec<usize> = orbit_min
        .iter()
        .map(|&x| class[x * np + x].expect("diagonal pair defined"))
        .collect();
    let mut comp = vec![None; n * n];
    for g1 in 0..n {
        let (x1, y1) = reps[g1];
        for g2 in 0..n {
            let (x2, y2) = reps[g2];
            if rho[y1] != rho[x2] {
                continue;
            }
            let h = reoq_t[x2 * np + y1].expect("same orbit");
            let z = a.try_act(y2, h).expect("anchors agree");
            comp[g1 * n + g2] = class[x1 * np + z];
        }
    }
    let inv = reps
        .iter()
        .map(|&(x, y)| class[y * np + x].expect("symmetric"))
        .collect();
    let base = FiniteGroupoid::from_tables(n_orbits, src, rng, inv, unit_embed, comp)?;
    let mut lact = vec![None; n * np];
    for (gi, &(x, y)) in reps.iter().enumerate() {
        for z in 0..np {
            if rho[z] == rho[y] {
                let k = reoq_t[y * np + z].expect("same orbit");
                lact[gi * np + z] = a.try_act(x, k);
            }
        }
    }
    let left = LeftAction {
        n_points: np,
        n_arrows: n,
        anchor: rho.clone(),
        act: lact,
    };
    Ok(ImprimitivityGroupoid {
        base,
        n_points: np,
        rep: reps,
        class,
        rho,
        orbit_min,
        left,
        reoq: reoq_t,
    })
}

/// The unique arrow `g` of the imprimitivity groupoid with `g ▷ y = x`.
pub fn leoq(gq: &ImprimitivityGroupoid, x: usize, y: usize) -> Result<usize> {
    gq.class_of(x, y)
        .ok_or_else(|| Error::structural(format!("points {x} and {y} have different anchors")))
}

/// The unique arrow `h` with `x·h = y`.
pub fn reoq(g: &FiniteGroupoid, a: &PrincipalAction, x: usize, y: usize) -> Result<usize> {
    let _ = g;
    a.find_translation(x, y)
        .ok_or_else(|| Error::structural(format!("points {x} and {y} lie in different orbits")))
}

/// True iff `candidate` is a bijection on arrows preserving units, source, range,
/// composition and inversion.
pub fn groupoid_isomorphic(g1: &FiniteGroupoid, g2: &FiniteGroupoid, candidate: &[usize]) -> bool {
    let n = g1.n_arrows();
    if candidate.len() != n || g2.n_arrows() != n || g1.n_units != g2.n_units {
        return false;
    }
    let mut seen = vec![false; n];
    for &c in candidate {
        if c >= n || seen[c] {
            return false;
        }
        seen[c] = true;
    }
    let mut unit_map = vec![usize::MAX; g1.n_units];
    for u in 0..g1.n_units {
        match g2.unit_of_arrow(candidate[g1.unit_embed[u]]) {
            Some(v) => unit_map[u] = v,
            None => return false,
        }
    }
    for a in 0..n {
        let b = candidate[a];
        if g2.src[b] != unit_map[g1.src[a]] || g2.rng[b] != unit_map[g1.rng[a]] {
            return false;
        }
        if g2.inv[b] != candidate[g1.inv[a]] {
            return false;
        }
        for c in 0..n {
            if let Some(ac) = g1.try_comp(a, c) {
                if g2.try_comp(b, candidate[c]) != Some(candidate[ac]) {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z4_mod_z2() -> (FiniteGroupoid, PrincipalAction) {
        // X = Z/4 with H = {0, 2} acting by translation; H arrow 0 ↦ 0, arrow 1 ↦ 2.
        let h = FiniteGroupoid::cyclic(2);
        let act = (0..4 * 2)
            .map(|i| Some((i / 2 + 2 * (i % 2)) % 4))
            .collect();
        let a = PrincipalAction::from_tables(&h, vec![0; 4], act).unwrap();
        (h, a)
    }

    #[test]
    fn catalogue_groupoids_are_valid() {
        for name in FiniteGroupoid::CATALOGUE {
            let g = FiniteGroupoid::named(name).unwrap();
            let r = validate_groupoid(&g);
            assert!(r.passed(), "{name}: {r}");
        }
    }

    #[test]
    fn single_unit_is_valid() {
        assert!(validate_groupoid(&FiniteGroupoid::point()).passed());
    }

    #[test]
    fn z2_with_wrong_inverse_is_flagged() {
        let mut g = FiniteGroupoid::cyclic(2);
        g.inv[1] = 0;
        let r = validate_groupoid(&g);
        let s = r.status("GPD-INV").unwrap();
        assert!(!s.passed);
        assert_eq!(s.witnesses[0].indices, vec![1]);
    }

    #[test]
    fn out_of_range_is_structural() {
        let mut g = FiniteGroupoid::cyclic(2);
        g.inv[1] = 7;
        let r = validate_groupoid(&g);
        assert!(r.has_structural_errors());
        assert!(r.checks.is_empty());
    }

    #[test]
    fn translation_action_is_valid() {
        let h = FiniteGroupoid::cyclic(2);
        assert!(validate_action(&h, &PrincipalAction::translation(&h)).passed());
        let p = FiniteGroupoid::point();
        assert!(validate_action(&p, &PrincipalAction::translation(&p)).passed());
    }

    #[test]
    fn non_free_action_is_flagged() {
        let h = FiniteGroupoid::cyclic(2);
        let a = PrincipalAction::from_tables(&h, vec![0], vec![Some(0), Some(0)]).unwrap();
        let r = validate_action(&h, &a);
        let s = r.status("ACT-FREE").unwrap();
        assert!(!s.passed);
        assert_eq!(s.witnesses[0].indices, vec![0, 1]);
    }

    #[test]
    fn x_equals_h_gives_h() {
        let h = FiniteGroupoid::cyclic(2);
        let a = PrincipalAction::translation(&h);
        let gq = imprimitivity_groupoid(&h, &a).unwrap();
        assert_eq!(gq.base.n_units, 1);
        assert_eq!(gq.base.n_arrows(), 2);
        assert_eq!(leoq(&gq, 0, 1).unwrap(), gq.class_of(0, 1).unwrap());
        assert_ne!(leoq(&gq, 0, 1).unwrap(), gq.base.unit_embed[0]);
        assert_eq!(reoq(&h, &a, 0, 1).unwrap(), 1);
        // [h1, h2^op] ↦ h1·h2⁻¹
        let f: Vec<usize> = gq
            .rep
            .iter()
            .map(|&(x, y)| h.try_comp(x, h.inv[y]).unwrap())
            .collect();
        assert!(groupoid_isomorphic(&gq.base, &h, &f));
    }

    #[test]
    fn two_points_over_trivial_group_give_pair_groupoid() {
        let h = FiniteGroupoid::point();
        let a = PrincipalAction::from_tables(&h, vec![0, 0], vec![Some(0), Some(1)]).unwrap();
        let gq = imprimitivity_groupoid(&h, &a).unwrap();
        assert_eq!(gq.base.n_units, 2);
        assert_eq!(gq.base.n_arrows(), 4);
        assert!(validate_groupoid(&gq.base).passed());
    }

    #[test]
    fn z4_over_z2_orbit_count() {
        let (h, a) = z4_mod_z2();
        assert!(validate_action(&h, &a).passed());
        let gq = imprimitivity_groupoid(&h, &a).unwrap();
        assert_eq!(gq.base.n_units, 2);
        assert_eq!(gq.base.n_arrows(), 8);
        // brute force: (1,3) lies in the orbit {(1,3), (3,1)}
        let g = leoq(&gq, 1, 3).unwrap();
        assert_eq!(gq.rep[g], (1, 3));
        assert_eq!(gq.class_of(3, 1), Some(g));
        assert!(validate_left_action(&gq.base, &gq.left).passed());
    }

    #[test]
    fn collapsing_map_is_not_iso() {
        let g = FiniteGroupoid::cyclic(3);
        assert!(groupoid_isomorphic(&g, &g, &[0, 1, 2]));
        assert!(!groupoid_isomorphic(&g, &g, &[0, 1, 1]));
        assert!(groupoid_isomorphic(&g, &g, &[0, 2, 1]));
    }

    #[test]
    fn reoq_matches_exhaustive_search() {
        let (h, a) = z4_mod_z2();
        let gq = imprimitivity_groupoid(&h, &a).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                let brute = (0..2).find(|&k| a.try_act(x, k) == Some(y));
                assert_eq!(gq.reoq(x, y), brute);
            }
        }
    }
}
