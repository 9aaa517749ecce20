//! Primitive operator typing and evaluation. Both interpreters and the C
//! backend agree on these semantics: unsigned arithmetic wraps at the
//! word width, shift amounts at or beyond the width yield 0, and division
//! or modulo by zero is a reported runtime error.

use crate::ast::{Literal, PrimOp, PrimType};

/// How an operator constrains its operands and result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpSig {
    /// numeric × numeric -> same numeric type
    Arith,
    /// prim × prim (equal types) -> bool
    CmpAny,
    /// numeric × numeric (equal types) -> bool
    CmpNum,
    /// bool × bool -> bool (strict, both operands evaluated)
    BoolBin,
    /// bool -> bool
    BoolUn,
    /// numeric -> same numeric type
    NumUn,
}

pub fn op_sig(op: PrimOp) -> OpSig {
    use PrimOp::*;
    match op {
        Add | Sub | Mul | Div | Mod | BitAnd | BitOr | BitXor | Shl | Shr => OpSig::Arith,
        Complement => OpSig::NumUn,
        Eq | Ne => OpSig::CmpAny,
        Lt | Le | Gt | Ge => OpSig::CmpNum,
        And | Or => OpSig::BoolBin,
        Not => OpSig::BoolUn,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpError {
    DivisionByZero,
    /// Operand shapes disagree with the operator; unreachable on checked
    /// programs.
    BadOperands,
}

fn mask(t: PrimType) -> u64 {
    match t.bits() {
        Some(64) => u64::MAX,
        Some(b) => (1u64 << b) - 1,
        None => 1,
    }
}

/// Apply an operator to fully evaluated literals.
pub fn apply_primop(op: PrimOp, args: &[Literal]) -> Result<Literal, OpError> {
    use PrimOp::*;
    let bin = |a: &Literal, b: &Literal| -> Result<(u64, u64, PrimType), OpError> {
        if a.ty != b.ty {
            return Err(OpError::BadOperands);
        }
        Ok((a.value, b.value, a.ty))
    };
    match op_sig(op) {
        OpSig::Arith => {
            let [a, b] = args else { return Err(OpError::BadOperands) };
            let (x, y, t) = bin(a, b)?;
            if !t.is_numeric() {
                return Err(OpError::BadOperands);
            }
            let bits = t.bits().unwrap() as u64;
            let v = match op {
                Add => x.wrapping_add(y),
                Sub => x.wrapping_sub(y),
                Mul => x.wrapping_mul(y),
                Div => {
                    if y == 0 {
                        return Err(OpError::DivisionByZero);
                    }
                    x / y
                }
                Mod => {
                    if y == 0 {
                        return Err(OpError::DivisionByZero);
                    }
                    x % y
                }
                BitAnd => x & y,
                BitOr => x | y,
                BitXor => x ^ y,
                Shl => {
                    if y >= bits {
                        0
                    } else {
                        x << y
                    }
                }
                Shr => {
                    if y >= bits {
                        0
                    } else {
                        x >> y
                    }
                }
                _ => unreachable!(),
            };
            Ok(Literal::uint(v & mask(t), t))
        }
        OpSig::NumUn => {
            let [a] = args else { return Err(OpError::BadOperands) };
            if !a.ty.is_numeric() {
                return Err(OpError::BadOperands);
            }
            Ok(Literal::uint(!a.value & mask(a.ty), a.ty))
        }
        OpSig::CmpAny | OpSig::CmpNum => {
            let [a, b] = args else { return Err(OpError::BadOperands) };
            let (x, y, t) = bin(a, b)?;
            if op_sig(op) == OpSig::CmpNum && !t.is_numeric() {
                return Err(OpError::BadOperands);
            }
            let v = match op {
                Eq => x == y,
                Ne => x != y,
                Lt => x < y,
                Le => x <= y,
                Gt => x > y,
                Ge => x >= y,
                _ => unreachable!(),
            };
            Ok(Literal::bool(v))
        }
        OpSig::BoolBin => {
            let [a, b] = args else { return Err(OpError::BadOperands) };
            let (x, y, t) = bin(a, b)?;
            if t != PrimType::Bool {
                return Err(OpError::BadOperands);
            }
            let v = match op {
                And => x != 0 && y != 0,
                Or => x != 0 || y != 0,
                _ => unreachable!(),
            };
            Ok(Literal::bool(v))
        }
        OpSig::BoolUn => {
            let [a] = args else { return Err(OpError::BadOperands) };
            if a.ty != PrimType::Bool {
                return Err(OpError::BadOperands);
            }
            Ok(Literal::bool(a.value == 0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l8(v: u64) -> Literal {
        Literal::uint(v, PrimType::U8)
    }

    #[test]
    fn arithmetic_wraps_at_width() {
        assert_eq!(apply_primop(PrimOp::Add, &[l8(2), l8(3)]).unwrap(), l8(5));
        assert_eq!(apply_primop(PrimOp::Add, &[l8(255), l8(1)]).unwrap(), l8(0));
        assert_eq!(apply_primop(PrimOp::Mul, &[l8(16), l8(16)]).unwrap(), l8(0));
        assert_eq!(apply_primop(PrimOp::Sub, &[l8(0), l8(1)]).unwrap(), l8(255));
    }

    #[test]
    fn shifts_beyond_width_yield_zero() {
        assert_eq!(apply_primop(PrimOp::Shl, &[l8(1), l8(8)]).unwrap(), l8(0));
        assert_eq!(apply_primop(PrimOp::Shl, &[l8(1), l8(7)]).unwrap(), l8(128));
        assert_eq!(apply_primop(PrimOp::Shr, &[l8(128), l8(9)]).unwrap(), l8(0));
        let big = Literal::uint(u64::MAX, PrimType::U64);
        let sh = Literal::uint(64, PrimType::U64);
        assert_eq!(
            apply_primop(PrimOp::Shl, &[big, sh]).unwrap(),
            Literal::uint(0, PrimType::U64)
        );
    }

    #[test]
    fn division_by_zero_is_reported() {
        assert_eq!(
            apply_primop(PrimOp::Div, &[l8(4), l8(0)]),
            Err(OpError::DivisionByZero)
        );
        assert_eq!(
            apply_primop(PrimOp::Mod, &[l8(4), l8(0)]),
            Err(OpError::DivisionByZero)
        );
    }

    #[test]
    fn comparisons_and_bool_ops() {
        assert_eq!(
            apply_primop(PrimOp::Lt, &[l8(3), l8(4)]).unwrap(),
            Literal::bool(true)
        );
        assert_eq!(
            apply_primop(PrimOp::Eq, &[Literal::bool(true), Literal::bool(false)]).unwrap(),
            Literal::bool(false)
        );
        assert_eq!(
            apply_primop(PrimOp::Or, &[Literal::bool(false), Literal::bool(true)]).unwrap(),
            Literal::bool(true)
        );
        assert_eq!(
            apply_primop(PrimOp::Not, &[Literal::bool(false)]).unwrap(),
            Literal::bool(true)
        );
        assert_eq!(
            apply_primop(PrimOp::Complement, &[l8(0xF0)]).unwrap(),
            l8(0x0F)
        );
    }

    #[test]
    fn mixed_width_operands_rejected() {
        let a = Literal::uint(1, PrimType::U8);
        let b = Literal::uint(1, PrimType::U16);
        assert_eq!(apply_primop(PrimOp::Add, &[a, b]), Err(OpError::BadOperands));
    }
}
