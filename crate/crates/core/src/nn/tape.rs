//! Scalar reverse-mode differentiation for arbitrary losses over a weight vector.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Clone, Copy)]
struct Node<T> {
    parents: [(usize, T); 2],
}

/// Records every operation so the adjoint sweep can replay it backwards.
#[derive(Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    idx: usize,
    val: T,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    fn push(&self, parents: [(usize, T); 2]) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents });
        nodes.len() - 1
    }

    pub fn var(&self, val: T) -> Var<'_, T> {
        let idx = self.nodes.borrow().len();
        let idx = self.push([(idx, T::zero()), (idx, T::zero())]);
        Var { tape: self, idx, val }
    }

    pub fn constant(&self, val: T) -> Var<'_, T> {
        self.var(val)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adjoints of every recorded node with respect to `out`.
    pub fn gradient(&self, out: Var<'_, T>) -> Vec<T> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![T::zero(); nodes.len()];
        adj[out.idx] = T::one();
        for i in (0..=out.idx).rev() {
            let a = adj[i];
            if a == T::zero() {
                continue;
            }
            for (p, d) in nodes[i].parents {
                if p != i {
                    adj[p] += a * d;
                }
            }
        }
        adj
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn value(&self) -> T {
        self.val
    }

    fn unary(self, val: T, d: T) -> Self {
        let idx = self.tape.push([(self.idx, d), (self.idx, T::zero())]);
        Var { tape: self.tape, idx, val }
    }

    fn binary(self, o: Self, val: T, da: T, db: T) -> Self {
        let idx = self.tape.push([(self.idx, da), (o.idx, db)]);
        Var { tape: self.tape, idx, val }
    }

    pub fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, T::one() - t * t)
    }

    pub fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Self {
        self.unary(self.val.ln(), T::one() / self.val)
    }

    pub fn square(self) -> Self {
        self.unary(self.val * self.val, T::of(2.0) * self.val)
    }

    pub fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.unary(r, T::of(0.5) / r)
    }

    pub fn abs(self) -> Self {
        self.unary(self.val.abs(), self.val.signum())
    }

    pub fn scale(self, c: T) -> Self {
        self.unary(self.val * c, c)
    }

    pub fn offset(self, c: T) -> Self {
        self.unary(self.val + c, T::one())
    }

    pub fn sum<I: IntoIterator<Item = Self>>(tape: &'t Tape<T>, items: I) -> Self {
        items.into_iter().fold(tape.constant(T::zero()), |acc, v| acc + v)
    }
}

impl<'t, T: Scalar> Add for Var<'t, T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.binary(o, self.val + o.val, T::one(), T::one())
    }
}

impl<'t, T: Scalar> Sub for Var<'t, T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.val - o.val, T::one(), -T::one())
    }
}

impl<'t, T: Scalar> Mul for Var<'t, T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl<'t, T: Scalar> Div for Var<'t, T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.val / o.val;
        self.binary(o, q, T::one() / o.val, -q / o.val)
    }
}

impl<'t, T: Scalar> Neg for Var<'t, T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, -T::one())
    }
}

/// Value and exact gradient of `loss` at `w`.
pub fn loss_gradient<T, F>(w: &[T], loss: F) -> Result<(T, Vec<T>)>
where
    T: Scalar,
    F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Var<'t, T>,
{
    let tape = Tape::new();
    let vars: Vec<_> = w.iter().map(|v| tape.var(*v)).collect();
    let out = loss(&tape, &vars);
    if !out.value().is_finite() {
        return Err(Error::Numerical(format!("loss is not finite ({})", out.value())));
    }
    let adj = tape.gradient(out);
    Ok((out.value(), vars.iter().map(|v| adj[v.idx]).collect()))
}
