//! Scalar expression tape with reverse-mode differentiation.
//!
//! Expressions are nodes in an append-only arena owned by a [`Tape`]. Values
//! are computed eagerly as nodes are built, so an [`Expr`] always has a value.
//! [`grad`] runs a reverse sweep that *emits new expressions onto the same
//! tape*; the returned derivatives are ordinary expressions and can be
//! differentiated again. This retaping is what allows losses containing
//! `‖∇_x f(x)‖` to be differentiated with respect to the parameters of `f`.
//!
//! [`grad_values`] is the terminal fast path: it accumulates plain `f64`
//! adjoints without building nodes, for the outermost derivative of a loss.

use std::cell::RefCell;

use crate::{Error, Result};

/// Sentinel for "no adjoint yet" (exact zero) in the reverse sweep.
const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Const,
    Var,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Neg(u32),
    Recip(u32),
    Exp(u32),
    Ln(u32),
    Tanh(u32),
    /// Softplus with sharpness `aux`: `ln(1 + exp(aux·x)) / aux`.
    Softplus(u32),
    /// Logistic with sharpness `aux`: `1 / (1 + exp(-aux·x))`.
    Sigmoid(u32),
    /// Power with constant exponent `aux`.
    Pow(u32),
    Sqrt(u32),
    /// `max(x, aux)`.
    MaxConst(u32),
    /// Heaviside indicator `x >= aux`; the derivative of `MaxConst`.
    Step(u32),
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    aux: f64,
    value: f64,
}

/// Append-only arena of scalar expression nodes.
///
/// A tape is single-threaded; distinct tapes may be used on distinct threads.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`]. Cheap to copy.
#[derive(Clone, Copy)]
pub struct Expr<'t> {
    tape: &'t Tape,
    id: u32,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    /// Number of nodes currently on the tape.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all nodes but keeps the allocation. Requires exclusive access,
    /// so no `Expr` from a previous round can survive a reset.
    pub fn reset(&mut self) {
        self.nodes.get_mut().clear();
    }

    fn push(&self, op: Op, aux: f64, value: f64) -> Expr<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len() as u32;
        nodes.push(Node { op, aux, value });
        Expr { tape: self, id }
    }

    fn node(&self, id: u32) -> Node {
        self.nodes.borrow()[id as usize]
    }

    pub fn constant(&self, value: f64) -> Expr<'_> {
        self.push(Op::Const, 0.0, value)
    }

    /// A leaf the tape treats as an independent input for differentiation.
    pub fn var(&self, value: f64) -> Expr<'_> {
        self.push(Op::Var, 0.0, value)
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Expr<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn constants(&self, values: &[f64]) -> Vec<Expr<'_>> {
        values.iter().map(|&v| self.constant(v)).collect()
    }
}

#[allow(clippy::should_implement_trait)] // `neg` mirrors the operator impl.
impl<'t> Expr<'t> {
    pub fn value(self) -> f64 {
        self.tape.node(self.id).value
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    fn is_const(self, c: f64) -> bool {
        let n = self.tape.node(self.id);
        n.op == Op::Const && n.value == c
    }

    /// The node's value if it is a literal constant.
    pub fn const_value(self) -> Option<f64> {
        let n = self.tape.node(self.id);
        if n.op == Op::Const {
            Some(n.value)
        } else {
            None
        }
    }

    pub fn neg(self) -> Expr<'t> {
        self.tape.push(Op::Neg(self.id), 0.0, -self.value())
    }

    pub fn recip(self) -> Expr<'t> {
        self.tape
            .push(Op::Recip(self.id), 0.0, self.value().recip())
    }

    pub fn exp(self) -> Expr<'t> {
        self.tape.push(Op::Exp(self.id), 0.0, self.value().exp())
    }

    pub fn ln(self) -> Expr<'t> {
        self.tape.push(Op::Ln(self.id), 0.0, self.value().ln())
    }

    pub fn tanh(self) -> Expr<'t> {
        self.tape.push(Op::Tanh(self.id), 0.0, self.value().tanh())
    }

    /// Smoothed ReLU `ln(1 + exp(beta·x)) / beta`, overflow-safe.
    pub fn softplus(self, beta: f64) -> Expr<'t> {
        let v = softplus_value(beta * self.value()) / beta;
        self.tape.push(Op::Softplus(self.id), beta, v)
    }

    /// Logistic function `1 / (1 + exp(-beta·x))`.
    pub fn sigmoid(self, beta: f64) -> Expr<'t> {
        let v = sigmoid_value(beta * self.value());
        self.tape.push(Op::Sigmoid(self.id), beta, v)
    }

    /// Power with a constant exponent.
    pub fn powf(self, exponent: f64) -> Expr<'t> {
        self.tape
            .push(Op::Pow(self.id), exponent, self.value().powf(exponent))
    }

    pub fn sqrt(self) -> Expr<'t> {
        self.tape.push(Op::Sqrt(self.id), 0.0, self.value().sqrt())
    }

    /// `max(x, c)` for a constant `c`. Its derivative is the indicator
    /// `x >= c` (one-sided at the kink).
    pub fn max_const(self, c: f64) -> Expr<'t> {
        self.tape
            .push(Op::MaxConst(self.id), c, self.value().max(c))
    }

    fn step(self, c: f64) -> Expr<'t> {
        let v = if self.value() >= c { 1.0 } else { 0.0 };
        self.tape.push(Op::Step(self.id), c, v)
    }

    pub fn square(self) -> Expr<'t> {
        self * self
    }
}

fn softplus_value(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else if t < -30.0 {
        t.exp()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid_value(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

// The 0/1 identity peepholes below elide a *constant* operand from the graph
// when the result equals the other operand (or a constant zero). The elided
// node keeps its correct mathematical influence on every value and on every
// derivative with respect to non-constant nodes; what is lost is only the
// ability to differentiate with respect to the elided literal itself. Leaves
// that will be differentiated against must therefore be registered with
// [`Tape::var`], never as constants — `var` nodes are never elided. No other
// folding happens: a constant-valued composite keeps its full parent chain.

fn add_impl<'t>(a: Expr<'t>, b: Expr<'t>) -> Expr<'t> {
    if a.is_const(0.0) {
        return b;
    }
    if b.is_const(0.0) {
        return a;
    }
    a.tape.push(Op::Add(a.id, b.id), 0.0, a.value() + b.value())
}

fn sub_impl<'t>(a: Expr<'t>, b: Expr<'t>) -> Expr<'t> {
    if b.is_const(0.0) {
        return a;
    }
    a.tape.push(Op::Sub(a.id, b.id), 0.0, a.value() - b.value())
}

fn mul_impl<'t>(a: Expr<'t>, b: Expr<'t>) -> Expr<'t> {
    if a.is_const(1.0) {
        return b;
    }
    if b.is_const(1.0) {
        return a;
    }
    if a.is_const(0.0) {
        return a;
    }
    if b.is_const(0.0) {
        return b;
    }
    a.tape.push(Op::Mul(a.id, b.id), 0.0, a.value() * b.value())
}

impl<'t> std::ops::Add for Expr<'t> {
    type Output = Expr<'t>;
    fn add(self, rhs: Expr<'t>) -> Expr<'t> {
        add_impl(self, rhs)
    }
}

impl<'t> std::ops::Sub for Expr<'t> {
    type Output = Expr<'t>;
    fn sub(self, rhs: Expr<'t>) -> Expr<'t> {
        sub_impl(self, rhs)
    }
}

impl<'t> std::ops::Mul for Expr<'t> {
    type Output = Expr<'t>;
    fn mul(self, rhs: Expr<'t>) -> Expr<'t> {
        mul_impl(self, rhs)
    }
}

impl<'t> std::ops::Div for Expr<'t> {
    type Output = Expr<'t>;
    fn div(self, rhs: Expr<'t>) -> Expr<'t> {
        mul_impl(self, rhs.recip())
    }
}

impl<'t> std::ops::Neg for Expr<'t> {
    type Output = Expr<'t>;
    fn neg(self) -> Expr<'t> {
        Expr::neg(self)
    }
}

impl<'t> std::ops::Add<f64> for Expr<'t> {
    type Output = Expr<'t>;
    fn add(self, rhs: f64) -> Expr<'t> {
        add_impl(self, self.tape.constant(rhs))
    }
}

impl<'t> std::ops::Sub<f64> for Expr<'t> {
    type Output = Expr<'t>;
    fn sub(self, rhs: f64) -> Expr<'t> {
        sub_impl(self, self.tape.constant(rhs))
    }
}

impl<'t> std::ops::Mul<f64> for Expr<'t> {
    type Output = Expr<'t>;
    fn mul(self, rhs: f64) -> Expr<'t> {
        mul_impl(self, self.tape.constant(rhs))
    }
}

impl<'t> std::ops::Div<f64> for Expr<'t> {
    type Output = Expr<'t>;
    fn div(self, rhs: f64) -> Expr<'t> {
        mul_impl(self, self.tape.constant(rhs.recip()))
    }
}

impl<'t> std::ops::Sub<Expr<'t>> for f64 {
    type Output = Expr<'t>;
    fn sub(self, rhs: Expr<'t>) -> Expr<'t> {
        sub_impl(rhs.tape.constant(self), rhs)
    }
}

impl<'t> std::ops::Mul<Expr<'t>> for f64 {
    type Output = Expr<'t>;
    fn mul(self, rhs: Expr<'t>) -> Expr<'t> {
        mul_impl(rhs.tape.constant(self), rhs)
    }
}

impl<'t> std::ops::Add<Expr<'t>> for f64 {
    type Output = Expr<'t>;
    fn add(self, rhs: Expr<'t>) -> Expr<'t> {
        add_impl(rhs.tape.constant(self), rhs)
    }
}

/// Derivatives of one expression with respect to a set of requested nodes.
///
/// Every requested node has an entry; nodes the output does not depend on map
/// to an exact-zero constant.
pub struct Gradient<'t> {
    wrt: Vec<u32>,
    exprs: Vec<Expr<'t>>,
}

impl<'t> Gradient<'t> {
    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    /// Derivative expressions, aligned with the `wrt` slice passed to [`grad`].
    pub fn exprs(&self) -> &[Expr<'t>] {
        &self.exprs
    }

    pub fn expr(&self, i: usize) -> Expr<'t> {
        self.exprs[i]
    }

    pub fn value(&self, i: usize) -> f64 {
        self.exprs[i].value()
    }

    pub fn values(&self) -> Vec<f64> {
        self.exprs.iter().map(|e| e.value()).collect()
    }

    /// Entry for a specific requested node, if it was requested.
    pub fn entry(&self, var: Expr<'t>) -> Option<Expr<'t>> {
        self.wrt
            .iter()
            .position(|&id| id == var.id)
            .map(|i| self.exprs[i])
    }
}

/// Reverse-mode derivatives of `output` with respect to `wrt`, emitted as new
/// expressions on the same tape (so they can be differentiated again).
///
/// `wrt` entries are usually leaves created with [`Tape::var`], but any node
/// is accepted: the adjoint of an interior node is the derivative of the
/// output with respect to that node's value, which is how input gradients of
/// a network are taken at points that are themselves expressions.
pub fn grad<'t>(output: Expr<'t>, wrt: &[Expr<'t>]) -> Gradient<'t> {
    let tape = output.tape;
    let n = output.id as usize + 1;
    let mut adj: Vec<u32> = vec![NONE; n];
    adj[output.id as usize] = tape.constant(1.0).id;

    for id in (0..n).rev() {
        let a = adj[id];
        if a == NONE {
            continue;
        }
        let node = tape.node(id as u32);
        let aexp = Expr { tape, id: a };
        let mut accumulate = |parent: u32, contrib: Expr<'t>| {
            let slot = &mut adj[parent as usize];
            if *slot == NONE {
                *slot = contrib.id;
            } else {
                let existing = Expr { tape, id: *slot };
                *slot = add_impl(existing, contrib).id;
            }
        };
        match node.op {
            Op::Const | Op::Var => {}
            Op::Add(l, r) => {
                accumulate(l, aexp);
                accumulate(r, aexp);
            }
            Op::Sub(l, r) => {
                accumulate(l, aexp);
                accumulate(r, aexp.neg());
            }
            Op::Mul(l, r) => {
                let le = Expr { tape, id: l };
                let re = Expr { tape, id: r };
                accumulate(l, mul_impl(aexp, re));
                accumulate(r, mul_impl(aexp, le));
            }
            Op::Neg(x) => accumulate(x, aexp.neg()),
            Op::Recip(x) => {
                // d(1/x)/dx = -(1/x)^2, reusing this node.
                let me = Expr {
                    tape,
                    id: id as u32,
                };
                accumulate(x, mul_impl(aexp, mul_impl(me, me).neg()));
            }
            Op::Exp(_x) => {
                let me = Expr {
                    tape,
                    id: id as u32,
                };
                accumulate(_x, mul_impl(aexp, me));
            }
            Op::Ln(x) => {
                let xe = Expr { tape, id: x };
                accumulate(x, mul_impl(aexp, xe.recip()));
            }
            Op::Tanh(x) => {
                let me = Expr {
                    tape,
                    id: id as u32,
                };
                let one = tape.constant(1.0);
                accumulate(x, mul_impl(aexp, sub_impl(one, mul_impl(me, me))));
            }
            Op::Softplus(x) => {
                let xe = Expr { tape, id: x };
                accumulate(x, mul_impl(aexp, xe.sigmoid(node.aux)));
            }
            Op::Sigmoid(x) => {
                // d σ(βx)/dx = β σ (1 - σ), reusing this node.
                let me = Expr {
                    tape,
                    id: id as u32,
                };
                let one = tape.constant(1.0);
                let ds = mul_impl(me, sub_impl(one, me)) * node.aux;
                accumulate(x, mul_impl(aexp, ds));
            }
            Op::Pow(x) => {
                let xe = Expr { tape, id: x };
                let dp = xe.powf(node.aux - 1.0) * node.aux;
                accumulate(x, mul_impl(aexp, dp));
            }
            Op::Sqrt(_x) => {
                // d sqrt(x)/dx = 1/(2 sqrt(x)), reusing this node.
                let me = Expr {
                    tape,
                    id: id as u32,
                };
                accumulate(_x, mul_impl(aexp, me.recip() * 0.5));
            }
            Op::MaxConst(x) => {
                let xe = Expr { tape, id: x };
                accumulate(x, mul_impl(aexp, xe.step(node.aux)));
            }
            Op::Step(_) => {}
        }
    }

    let exprs = wrt
        .iter()
        .map(|w| {
            let slot = if (w.id as usize) < n {
                adj[w.id as usize]
            } else {
                NONE
            };
            if slot == NONE {
                tape.constant(0.0)
            } else {
                Expr { tape, id: slot }
            }
        })
        .collect();
    Gradient {
        wrt: wrt.iter().map(|w| w.id).collect(),
        exprs,
    }
}

/// Reverse-mode derivative values of `output` with respect to `wrt`, without
/// emitting new nodes. Use for the outermost derivative of a loss.
pub fn grad_values(output: Expr<'_>, wrt: &[Expr<'_>]) -> Vec<f64> {
    let tape = output.tape;
    let nodes = tape.nodes.borrow();
    let n = output.id as usize + 1;
    let mut adj = vec![0.0f64; n];
    adj[output.id as usize] = 1.0;

    for id in (0..n).rev() {
        let a = adj[id];
        if a == 0.0 {
            continue;
        }
        let node = nodes[id];
        match node.op {
            Op::Const | Op::Var | Op::Step(_) => {}
            Op::Add(l, r) => {
                adj[l as usize] += a;
                adj[r as usize] += a;
            }
            Op::Sub(l, r) => {
                adj[l as usize] += a;
                adj[r as usize] -= a;
            }
            Op::Mul(l, r) => {
                adj[l as usize] += a * nodes[r as usize].value;
                adj[r as usize] += a * nodes[l as usize].value;
            }
            Op::Neg(x) => adj[x as usize] -= a,
            Op::Recip(x) => {
                let v = node.value;
                adj[x as usize] -= a * v * v;
            }
            Op::Exp(x) => adj[x as usize] += a * node.value,
            Op::Ln(x) => adj[x as usize] += a / nodes[x as usize].value,
            Op::Tanh(x) => {
                let t = node.value;
                adj[x as usize] += a * (1.0 - t * t);
            }
            Op::Softplus(x) => {
                adj[x as usize] += a * sigmoid_value(node.aux * nodes[x as usize].value);
            }
            Op::Sigmoid(x) => {
                let s = node.value;
                adj[x as usize] += a * node.aux * s * (1.0 - s);
            }
            Op::Pow(x) => {
                let xv = nodes[x as usize].value;
                adj[x as usize] += a * node.aux * xv.powf(node.aux - 1.0);
            }
            Op::Sqrt(x) => {
                adj[x as usize] += a * 0.5 / node.value;
            }
            Op::MaxConst(x) => {
                if nodes[x as usize].value >= node.aux {
                    adj[x as usize] += a;
                }
            }
        }
    }

    wrt.iter()
        .map(|w| {
            if (w.id as usize) < n {
                adj[w.id as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// Identity combinator that pins a closure to the loss-builder signature
/// [`finite_difference_check`] expects; Rust will not infer the
/// higher-ranked lifetime for an annotated closure on its own.
pub fn loss_builder<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &[Expr<'t>]) -> Expr<'t>,
{
    f
}

/// Compares the tape gradient of a scalar loss against central finite
/// differences, coordinate by coordinate.
///
/// `build` must construct the loss from the supplied leaf variables; it is
/// re-invoked on fresh tapes at perturbed points. Returns the maximum error,
/// taken relative when the gradient magnitude exceeds the absolute floor of
/// `1e-8` and absolute below it — a structurally-zero coordinate (for
/// example, the output bias of a critic under a shift-invariant loss) would
/// otherwise be dominated by the cancellation noise of the differences.
pub fn finite_difference_check<F>(build: F, at: &[f64], step: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Expr<'t>]) -> Expr<'t>,
{
    if step <= 0.0 {
        return Err(Error::Usage(
            "finite difference step must be positive".into(),
        ));
    }
    let eval = |point: &[f64]| -> Result<f64> {
        let tape = Tape::new();
        let xs = tape.vars(point);
        let v = build(&tape, &xs).value();
        if !v.is_finite() {
            return Err(Error::Numeric(format!("loss is not finite at {point:?}")));
        }
        Ok(v)
    };

    let tape = Tape::new();
    let xs = tape.vars(at);
    let out = build(&tape, &xs);
    if !out.value().is_finite() {
        return Err(Error::Numeric(
            "loss is not finite at the base point".into(),
        ));
    }
    let analytic = grad_values(out, &xs);

    let mut worst = 0.0f64;
    let mut point = at.to_vec();
    for k in 0..at.len() {
        point[k] = at[k] + step;
        let plus = eval(&point)?;
        point[k] = at[k] - step;
        let minus = eval(&point)?;
        point[k] = at[k];
        let fd = (plus - minus) / (2.0 * step);
        let scale = analytic[k].abs().max(fd.abs());
        let err = if scale >= 1e-8 {
            (analytic[k] - fd).abs() / scale
        } else {
            (analytic[k] - fd).abs()
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_gradient() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = x * x;
        let g = grad_values(y, &[x]);
        assert_eq!(g[0], 6.0);
    }

    #[test]
    fn figure_critic_derivative() {
        // f(x) = x(-4x² + 4x - 2);  f'(0.5) = -12·0.25 + 8·0.5 - 2 = -1.
        let tape = Tape::new();
        let x = tape.var(0.5);
        let f = x * (x * x * (-4.0) + x * 4.0 - 2.0);
        let g = grad_values(f, &[x]);
        assert!((g[0] + 1.0).abs() < 1e-12, "got {}", g[0]);
    }

    fn grad_norm_squared<'t>(_tape: &'t Tape, v: &[Expr<'t>]) -> Expr<'t> {
        // g(x, y) = ‖∇_x f‖² for f = x³ y.
        let (x, y) = (v[0], v[1]);
        let f = x * x * x * y;
        let df = grad(f, &[x]);
        df.expr(0).square()
    }

    #[test]
    fn nested_gradient_matches_finite_difference() {
        // ∂g/∂y = 18 x⁴ y = 36 at (1, 2).
        let err = finite_difference_check(grad_norm_squared, &[1.0, 2.0], 1e-6).unwrap();
        assert!(err < 1e-6, "relative error {err}");

        let tape = Tape::new();
        let v = tape.vars(&[1.0, 2.0]);
        let g = grad_norm_squared(&tape, &v);
        let dy = grad_values(g, &[v[1]]);
        assert!((dy[0] - 36.0).abs() < 1e-9);
    }

    fn quadratic<'t>(_tape: &'t Tape, v: &[Expr<'t>]) -> Expr<'t> {
        v.iter()
            .enumerate()
            .map(|(i, &x)| x * x * (i as f64 + 1.0) + x * 0.5)
            .reduce(|a, b| a + b)
            .unwrap()
    }

    #[test]
    fn quadratic_finite_difference_is_tight() {
        let err = finite_difference_check(quadratic, &[0.3, -1.2, 2.5], 1e-5).unwrap();
        assert!(err < 1e-9, "relative error {err}");
    }

    #[test]
    fn second_order_matches_second_differences() {
        // h(x) = tanh(x)·exp(x/2); compare d²h/dx² against central second
        // differences with h = 1e-4.
        let f = |x: f64| x.tanh() * (x / 2.0).exp();
        let x0 = 0.7;
        let tape = Tape::new();
        let x = tape.var(x0);
        let h = x.tanh() * (x * 0.5).exp();
        let first = grad(h, &[x]);
        let second = grad_values(first.expr(0), &[x]);
        let hh = 1e-4;
        let numeric = (f(x0 + hh) - 2.0 * f(x0) + f(x0 - hh)) / (hh * hh);
        let rel = (second[0] - numeric).abs() / numeric.abs().max(1e-8);
        assert!(rel < 1e-3, "relative error {rel}");
    }

    #[test]
    fn gradient_wrt_absent_variable_is_exact_zero() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let z = tape.var(5.0);
        let y = x * x + 1.0;
        let g = grad(y, &[x, z]);
        assert_eq!(g.value(0), 4.0);
        assert_eq!(g.value(1), 0.0);
        let gv = grad_values(y, &[x, z]);
        assert_eq!(gv[1], 0.0);
    }

    #[test]
    fn max_const_and_step() {
        let tape = Tape::new();
        let x = tape.var(0.5);
        let y = x.max_const(1.0);
        assert_eq!(y.value(), 1.0);
        assert_eq!(grad_values(y, &[x])[0], 0.0);

        let x2 = tape.var(2.0);
        let y2 = x2.max_const(1.0);
        assert_eq!(y2.value(), 2.0);
        assert_eq!(grad_values(y2, &[x2])[0], 1.0);
    }

    #[test]
    fn softplus_and_sigmoid_values() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        let s = x.softplus(10.0);
        assert!((s.value() - (2.0f64.ln() / 10.0)).abs() < 1e-15);
        let g = grad_values(s, &[x]);
        assert!((g[0] - 0.5).abs() < 1e-15);

        // Saturation must not overflow.
        let big = tape.var(100.0);
        assert!((big.softplus(10.0).value() - 100.0).abs() < 1e-12);
        let neg = tape.var(-100.0);
        assert!(neg.softplus(10.0).value() >= 0.0);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let run = || {
            let tape = Tape::new();
            let x = tape.var(1.234);
            let y = (x.tanh() * 3.0 + x.exp()).sqrt().ln();
            let g = grad_values(y, &[x]);
            (y.value().to_bits(), g[0].to_bits())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn linearity_exact_for_dyadic_scalars() {
        // Scaling by powers of two commutes exactly with IEEE rounding, so
        // grad(a·f + b·g) must equal a·grad(f) + b·grad(g) bitwise when each
        // variable feeds each summand through a single path.
        for k in [-3i32, -1, 0, 2, 5] {
            let a = (2.0f64).powi(k);
            let b = (2.0f64).powi(1 - k);
            let tape = Tape::new();
            let x = tape.var(0.8317);
            let y = tape.var(1.55);
            let f = x.tanh() * y;
            let g = x.exp() + y.sqrt();
            let combined = f * a + g * b;
            let gc = grad_values(combined, &[x, y]);
            let gf = grad_values(f, &[x, y]);
            let gg = grad_values(g, &[x, y]);
            for i in 0..2 {
                assert_eq!(gc[i], a * gf[i] + b * gg[i], "k={k}, i={i}");
            }
        }
    }

    #[test]
    fn linearity_close_for_general_scalars() {
        let (a, b) = (1.7, -0.3);
        let tape = Tape::new();
        let x = tape.var(0.8317);
        let y = tape.var(1.55);
        let f = x.tanh() * y + x * x;
        let g = (x * y).exp() + y.sqrt();
        let combined = f * a + g * b;
        let gc = grad_values(combined, &[x, y]);
        let gf = grad_values(f, &[x, y]);
        let gg = grad_values(g, &[x, y]);
        for i in 0..2 {
            let want = a * gf[i] + b * gg[i];
            assert!((gc[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn tape_reset_reuses_allocation() {
        let mut tape = Tape::with_capacity(16);
        {
            let x = tape.var(1.0);
            let _ = x * x + 2.0;
        }
        assert!(!tape.is_empty());
        tape.reset();
        assert_eq!(tape.len(), 0);
        let x = tape.var(2.0);
        assert_eq!((x * x).value(), 4.0);
    }
}
