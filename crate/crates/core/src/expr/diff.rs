use super::{BinOp, Expr, Func, Var};

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(x) if *x == v)
}

pub(super) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => num(-v),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

pub(super) fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => num(x + y),
        (a, b) if a.is_zero() => b,
        (a, b) if b.is_zero() => a,
        (a, b) => Expr::Binary(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

pub(super) fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => num(x - y),
        (a, b) if b.is_zero() => a,
        (a, b) if a.is_zero() => neg(b),
        (a, b) => Expr::Binary(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

pub(super) fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => num(x * y),
        (a, _) if a.is_zero() => num(0.0),
        (_, b) if b.is_zero() => num(0.0),
        (a, b) if is_num(&a, 1.0) => b,
        (a, b) if is_num(&b, 1.0) => a,
        (a, b) if is_num(&a, -1.0) => neg(b),
        (a, b) if is_num(&b, -1.0) => neg(a),
        (a, b) => Expr::Binary(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

pub(super) fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) if y != 0.0 => num(x / y),
        (a, b) if a.is_zero() && !b.is_zero() => num(0.0),
        (a, b) if is_num(&b, 1.0) => a,
        (a, b) => Expr::Binary(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

pub(super) fn pow(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (_, b) if b.is_zero() => num(1.0),
        (a, b) if is_num(&b, 1.0) => a,
        (a, b) => Expr::Binary(BinOp::Pow, Box::new(a), Box::new(b)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, vec![a])
}

fn select(lhs: Expr, rhs: Expr, then: Expr, otherwise: Expr) -> Expr {
    if then == otherwise {
        return then;
    }
    Expr::Select(Box::new([lhs, rhs, then, otherwise]))
}

pub(super) fn diff(e: &Expr, var: Var) -> Expr {
    if !e.depends_on(var) {
        return num(0.0);
    }
    match e {
        Expr::Num(_) => num(0.0),
        Expr::Var(v) => num(if *v == var { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(diff(a, var)),
        Expr::Binary(op, a, b) => {
            let (a, b) = (a.as_ref(), b.as_ref());
            match op {
                BinOp::Add => add(diff(a, var), diff(b, var)),
                BinOp::Sub => sub(diff(a, var), diff(b, var)),
                BinOp::Mul => add(mul(diff(a, var), b.clone()), mul(a.clone(), diff(b, var))),
                BinOp::Div => {
                    let da = diff(a, var);
                    if !b.depends_on(var) {
                        return div(da, b.clone());
                    }
                    let db = diff(b, var);
                    div(
                        sub(mul(da, b.clone()), mul(a.clone(), db)),
                        pow(b.clone(), num(2.0)),
                    )
                }
                BinOp::Pow => {
                    if !b.depends_on(var) {
                        // d(a^k) = k a^(k-1) a'
                        let k_minus_one = sub(b.clone(), num(1.0));
                        mul(mul(b.clone(), pow(a.clone(), k_minus_one)), diff(a, var))
                    } else if !a.depends_on(var) {
                        mul(mul(e.clone(), call(Func::Log, a.clone())), diff(b, var))
                    } else {
                        // a^b (b' log a + b a'/a)
                        let inner = add(
                            mul(diff(b, var), call(Func::Log, a.clone())),
                            div(mul(b.clone(), diff(a, var)), a.clone()),
                        );
                        mul(e.clone(), inner)
                    }
                }
            }
        }
        Expr::Call(func, args) => {
            let a = &args[0];
            let da = diff(a, var);
            match func {
                Func::Sin => mul(call(Func::Cos, a.clone()), da),
                Func::Cos => neg(mul(call(Func::Sin, a.clone()), da)),
                Func::Exp => mul(e.clone(), da),
                Func::Log => div(da, a.clone()),
                Func::Sqrt => div(da, mul(num(2.0), e.clone())),
                Func::Tanh => mul(sub(num(1.0), pow(e.clone(), num(2.0))), da),
                Func::Abs => select(num(0.0), a.clone(), da.clone(), neg(da)),
                Func::Min => {
                    let b = &args[1];
                    select(a.clone(), b.clone(), da, diff(b, var))
                }
                Func::Max => {
                    let b = &args[1];
                    select(b.clone(), a.clone(), da, diff(b, var))
                }
            }
        }
        Expr::Select(parts) => {
            let [l, r, x, y] = &**parts;
            select(l.clone(), r.clone(), diff(x, var), diff(y, var))
        }
    }
}
