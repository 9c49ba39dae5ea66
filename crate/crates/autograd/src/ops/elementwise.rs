use crate::error::{mismatch, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Element-wise op kinds. Binary kinds take two operands of equal shape, or one
/// single-element operand that broadcasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Scale,
    Relu,
    Sigmoid,
    Log,
    Exp,
    Abs,
}

/// Dispatches an [`Elementwise`] kind. `Scale` multiplies by the single value
/// held in `b`.
pub fn elementwise<E: Scalar>(kind: Elementwise, a: &Tensor<E>, b: Option<&Tensor<E>>) -> Result<Tensor<E>> {
    let need_b = || {
        b.ok_or_else(|| crate::error::geometry("elementwise", format!("{kind:?} needs a second operand")))
    };
    match kind {
        Elementwise::Add => a.add(need_b()?),
        Elementwise::Sub => a.sub(need_b()?),
        Elementwise::Mul => a.mul(need_b()?),
        Elementwise::Scale => {
            let s = need_b()?;
            if s.numel() != 1 {
                return Err(mismatch("scale", a.shape(), s.shape()));
            }
            a.scale(s.item())
        }
        Elementwise::Relu => a.relu(),
        Elementwise::Sigmoid => a.sigmoid(),
        Elementwise::Log => a.log(),
        Elementwise::Exp => a.exp(),
        Elementwise::Abs => a.abs(),
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

fn binary<E: Scalar>(kind: Binary, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let op = match kind {
        Binary::Add => "add",
        Binary::Sub => "sub",
        Binary::Mul => "mul",
    };
    let (shape, a_bc, b_bc) = if a.shape() == b.shape() {
        (a.shape().to_vec(), false, false)
    } else if b.numel() == 1 {
        (a.shape().to_vec(), false, true)
    } else if a.numel() == 1 {
        (b.shape().to_vec(), true, false)
    } else {
        return Err(mismatch(op, a.shape(), b.shape()));
    };
    let n = shape.iter().product::<usize>();
    let at = |i: usize| if a_bc { a.data()[0] } else { a.data()[i] };
    let bt = |i: usize| if b_bc { b.data()[0] } else { b.data()[i] };
    let f = |x: E, y: E| match kind {
        Binary::Add => x + y,
        Binary::Sub => x - y,
        Binary::Mul => x * y,
    };
    let data: Vec<E> = (0..n).map(|i| f(at(i), bt(i))).collect();

    let (ac, bc) = (a.clone(), b.clone());
    let (a_req, b_req) = (a.requires_grad(), b.requires_grad());
    let backward = Box::new(move |g: &[E]| {
        let reduce = |full: Vec<E>, bc: bool| {
            if bc {
                vec![full.into_iter().fold(E::zero(), |s, v| s + v)]
            } else {
                full
            }
        };
        let at = |i: usize| if a_bc { ac.data()[0] } else { ac.data()[i] };
        let bt = |i: usize| if b_bc { bc.data()[0] } else { bc.data()[i] };
        let ga = a_req.then(|| {
            let full: Vec<E> = match kind {
                Binary::Add | Binary::Sub => g.to_vec(),
                Binary::Mul => g.iter().enumerate().map(|(i, &gi)| gi * bt(i)).collect(),
            };
            reduce(full, a_bc)
        });
        let gb = b_req.then(|| {
            let full: Vec<E> = match kind {
                Binary::Add => g.to_vec(),
                Binary::Sub => g.iter().map(|&gi| -gi).collect(),
                Binary::Mul => g.iter().enumerate().map(|(i, &gi)| gi * at(i)).collect(),
            };
            reduce(full, b_bc)
        });
        vec![ga, gb]
    });
    Tensor::from_op(op, data, shape, vec![a.clone(), b.clone()], backward)
}

/// Unary map whose derivative is expressed through the input `x` and the
/// output `y`.
fn unary<E: Scalar>(
    op: &'static str,
    a: &Tensor<E>,
    f: impl Fn(E) -> E,
    df: impl Fn(E, E) -> E + 'static,
) -> Result<Tensor<E>> {
    let data: Vec<E> = a.data().iter().map(|&x| f(x)).collect();
    let out_vals = if a.requires_grad() { data.clone() } else { Vec::new() };
    let input = a.clone();
    let backward = Box::new(move |g: &[E]| {
        let gx = g
            .iter()
            .zip(input.data())
            .zip(&out_vals)
            .map(|((&gi, &x), &y)| gi * df(x, y))
            .collect();
        vec![Some(gx)]
    });
    Tensor::from_op(op, data, a.shape().to_vec(), vec![a.clone()], backward)
}

impl<E: Scalar> Tensor<E> {
    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary(Binary::Add, self, other)
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary(Binary::Sub, self, other)
    }

    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary(Binary::Mul, self, other)
    }

    pub fn scale(&self, s: E) -> Result<Tensor<E>> {
        unary("scale", self, |x| x * s, move |_, _| s)
    }

    pub fn add_scalar(&self, s: E) -> Result<Tensor<E>> {
        unary("add_scalar", self, |x| x + s, |_, _| E::one())
    }

    /// `1 - x`.
    pub fn one_minus(&self) -> Result<Tensor<E>> {
        unary("one_minus", self, |x| E::one() - x, |_, _| -E::one())
    }

    pub fn square(&self) -> Result<Tensor<E>> {
        let two = E::of(2.0);
        unary("square", self, |x| x * x, move |x, _| two * x)
    }

    /// Derivative at 0 is taken as 0.
    pub fn relu(&self) -> Result<Tensor<E>> {
        unary(
            "relu",
            self,
            |x| if x > E::zero() { x } else { E::zero() },
            |x, _| if x > E::zero() { E::one() } else { E::zero() },
        )
    }

    pub fn sigmoid(&self) -> Result<Tensor<E>> {
        unary(
            "sigmoid",
            self,
            |x| {
                if x >= E::zero() {
                    E::one() / (E::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (E::one() + e)
                }
            },
            |_, y| y * (E::one() - y),
        )
    }

    pub fn log(&self) -> Result<Tensor<E>> {
        unary("log", self, |x| x.ln(), |x, _| E::one() / x)
    }

    pub fn exp(&self) -> Result<Tensor<E>> {
        unary("exp", self, |x| x.exp(), |_, y| y)
    }

    /// Subgradient at 0 is taken as 0.
    pub fn abs(&self) -> Result<Tensor<E>> {
        unary("abs", self, |x| x.abs(), |x, _| {
            if x > E::zero() {
                E::one()
            } else if x < E::zero() {
                -E::one()
            } else {
                E::zero()
            }
        })
    }
}
