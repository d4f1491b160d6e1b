//! Derivative fields ("jets") of a grid field and their evaluation at a point.

use num_complex::Complex64;

use crate::calculus::{derivative_components, DerivativeScheme, Order, ZERO_ORDER};
use crate::error::Result;
use crate::grid::{Grid, Point, MAX_DIMS};
use crate::interp::Stencil;
use crate::wavefunction::{Units, WaveFunction};

/// Values of a (possibly multi-component) field and its spatial derivatives
/// at one point.
pub trait LocalField {
    fn point(&self) -> Point;
    fn dims(&self) -> usize;
    fn components(&self) -> usize;
    fn units(&self) -> Units;
    /// ∂^order of component `c` at the point.
    fn derivative(&self, c: usize, order: Order) -> Complex64;

    fn value(&self, c: usize) -> Complex64 {
        self.derivative(c, ZERO_ORDER)
    }
}

/// Every multi-index with total order ≤ `max_total` in `dims` dimensions.
pub fn orders_up_to(dims: usize, max_total: u8) -> Vec<Order> {
    let mut out = Vec::new();
    if dims == 1 {
        for i in 0..=max_total {
            let mut o = ZERO_ORDER;
            o[0] = i;
            out.push(o);
        }
    } else {
        for total in 0..=max_total {
            for i in 0..=total {
                let mut o = ZERO_ORDER;
                o[0] = i;
                o[1] = total - i;
                out.push(o);
            }
        }
    }
    out
}

/// Grid derivative fields of one field, computed once with a fixed scheme.
#[derive(Debug, Clone)]
pub struct GridJets {
    grid: Grid,
    components: usize,
    units: Units,
    scheme: DerivativeScheme,
    fields: Vec<(Order, Vec<Complex64>)>,
}

impl GridJets {
    pub fn new(
        grid: &Grid,
        data: &[Complex64],
        components: usize,
        units: Units,
        scheme: DerivativeScheme,
        max_total: u8,
    ) -> Result<Self> {
        scheme.check(grid)?;
        let fields = orders_up_to(grid.dims(), max_total)
            .into_iter()
            .map(|o| Ok((o, derivative_components(grid, data, components, o, scheme)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            components,
            units,
            scheme,
            fields,
        })
    }

    pub fn of(psi: &WaveFunction, scheme: DerivativeScheme, max_total: u8) -> Result<Self> {
        Self::new(
            psi.grid(),
            psi.amplitudes(),
            psi.components(),
            psi.units,
            scheme,
            max_total,
        )
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn scheme(&self) -> DerivativeScheme {
        self.scheme
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn field(&self, order: Order) -> &[Complex64] {
        self.fields
            .iter()
            .find(|(o, _)| *o == order)
            .map(|(_, f)| f.as_slice())
            .unwrap_or_else(|| panic!("derivative {order:?} was not precomputed"))
    }

    pub fn at(&self, q: &Point) -> JetPoint<'_> {
        JetPoint {
            jets: self,
            stencil: Stencil::new(&self.grid, q),
            q: *q,
        }
    }

    pub fn node(&self, flat: usize) -> JetNode<'_> {
        JetNode {
            jets: self,
            flat,
            q: self.grid.point(flat),
        }
    }
}

/// Jets interpolated at an arbitrary point.
pub struct JetPoint<'a> {
    jets: &'a GridJets,
    stencil: Stencil,
    q: Point,
}

impl LocalField for JetPoint<'_> {
    fn point(&self) -> Point {
        self.q
    }
    fn dims(&self) -> usize {
        self.jets.grid.dims()
    }
    fn components(&self) -> usize {
        self.jets.components
    }
    fn units(&self) -> Units {
        self.jets.units
    }
    fn derivative(&self, c: usize, order: Order) -> Complex64 {
        let n = self.jets.grid.len();
        self.stencil.complex(&self.jets.field(order)[c * n..(c + 1) * n])
    }
}

/// Jets read directly at a grid node.
pub struct JetNode<'a> {
    jets: &'a GridJets,
    flat: usize,
    q: Point,
}

impl LocalField for JetNode<'_> {
    fn point(&self) -> Point {
        self.q
    }
    fn dims(&self) -> usize {
        self.jets.grid.dims()
    }
    fn components(&self) -> usize {
        self.jets.components
    }
    fn units(&self) -> Units {
        self.jets.units
    }
    fn derivative(&self, c: usize, order: Order) -> Complex64 {
        self.jets.field(order)[c * self.jets.grid.len() + self.flat]
    }
}

/// Explicit point values of a field and its derivatives, e.g. a time
/// interpolation of several jets.
#[derive(Debug, Clone)]
pub struct PointJet {
    pub q: Point,
    pub dims: usize,
    pub components: usize,
    pub units: Units,
    pub values: Vec<(Order, [Complex64; 2])>,
}

impl PointJet {
    /// Captures the precomputed orders of `jets` up to total `max_total` at `q`.
    pub fn capture(jets: &GridJets, q: &Point, max_total: u8) -> Self {
        let st = Stencil::new(&jets.grid, q);
        let n = jets.grid.len();
        let values = jets
            .fields
            .iter()
            .filter(|(o, _)| o.iter().sum::<u8>() <= max_total)
            .map(|(o, f)| {
                let mut v = [Complex64::new(0.0, 0.0); 2];
                for (c, x) in v.iter_mut().enumerate().take(jets.components) {
                    *x = st.complex(&f[c * n..(c + 1) * n]);
                }
                (*o, v)
            })
            .collect();
        Self {
            q: *q,
            dims: jets.grid.dims(),
            components: jets.components,
            units: jets.units,
            values,
        }
    }

    /// Σ w_i·jet_i over jets captured with identical orders.
    pub fn combine(parts: &[(f64, &PointJet)]) -> Self {
        let first = parts[0].1;
        let mut out = first.clone();
        for (o, v) in out.values.iter_mut() {
            *v = [Complex64::new(0.0, 0.0); 2];
            for (w, p) in parts {
                let pv = p
                    .values
                    .iter()
                    .find(|(po, _)| po == o)
                    .map(|(_, x)| x)
                    .expect("jets captured with different orders");
                v[0] += pv[0] * *w;
                v[1] += pv[1] * *w;
            }
        }
        out
    }
}

impl LocalField for PointJet {
    fn point(&self) -> Point {
        self.q
    }
    fn dims(&self) -> usize {
        self.dims
    }
    fn components(&self) -> usize {
        self.components
    }
    fn units(&self) -> Units {
        self.units
    }
    fn derivative(&self, c: usize, order: Order) -> Complex64 {
        self.values
            .iter()
            .find(|(o, _)| *o == order)
            .map(|(_, v)| v[c])
            .unwrap_or_else(|| panic!("derivative {order:?} was not captured"))
    }
}

/// Spinor-aware helpers over a local field.
pub fn values(local: &dyn LocalField) -> [Complex64; 2] {
    let mut v = [Complex64::new(0.0, 0.0); 2];
    for (c, x) in v.iter_mut().enumerate().take(local.components()) {
        *x = local.value(c);
    }
    v
}

pub fn density(local: &dyn LocalField) -> f64 {
    (0..local.components()).map(|c| local.value(c).norm_sqr()).sum()
}

/// (ħ/m)·Im(ψ†∂ψ)/ψ†ψ at the point.
pub fn velocity(local: &dyn LocalField, dims: usize) -> Point {
    let u = local.units();
    let rho = density(local);
    let mut v = [0.0; MAX_DIMS];
    for (a, va) in v.iter_mut().enumerate().take(dims) {
        let o = crate::calculus::unit_order(a);
        let num: f64 = (0..local.components())
            .map(|c| (local.value(c).conj() * local.derivative(c, o)).im)
            .sum();
        *va = u.hbar / u.mass * num / rho;
    }
    v
}

/// ∇·v from first and second derivatives of ψ at the point.
pub fn velocity_divergence(local: &dyn LocalField, dims: usize) -> f64 {
    let u = local.units();
    let rho = density(local);
    let mut div = 0.0;
    for a in 0..dims {
        let o1 = crate::calculus::unit_order(a);
        let mut o2 = ZERO_ORDER;
        o2[a] = 2;
        let mut j = 0.0; // Im ψ†∂ψ
        let mut dj = 0.0; // ∂ Im ψ†∂ψ = Im ψ†∂²ψ
        let mut drho = 0.0;
        for c in 0..local.components() {
            let p = local.value(c);
            let d1 = local.derivative(c, o1);
            let d2 = local.derivative(c, o2);
            j += (p.conj() * d1).im;
            dj += (p.conj() * d2).im;
            drho += 2.0 * (p.conj() * d1).re;
        }
        div += dj / rho - j * drho / (rho * rho);
    }
    u.hbar / u.mass * div
}
