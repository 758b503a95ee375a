//! Prime-order subgroup arithmetic for commitments, plus the signed encoding
//! that maps quantized codes into exponents.
//!
//! Values live in the order-`q` subgroup of `Z_p^*` with `q | p - 1`. Scalars
//! are residues mod `q`; a scalar above `q/2` stands for a negative integer.
//! Moduli below 2^63 take a native `u64` path; larger ones use `BigUint` with a
//! fixed-base window table for powers of `g`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CONSTANTS: &str = include_str!("../constants/groups.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Test,
    Demo,
}

/// An exponent-domain value in `[0, q)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(BigUint);

/// An element of the order-`q` subgroup.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Element(BigUint);

/// Commitments are plain subgroup elements `g^s`.
pub type Commitment = Element;

impl Scalar {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl Element {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_one()
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", self.0)
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Element({})", self.0)
    }
}

#[derive(Clone, Copy, Debug)]
struct Native {
    p: u64,
    q: u64,
    g: u64,
}

impl Native {
    fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.p as u128) as u64
    }

    fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        let mut b = base % self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }
}

const WINDOW_BITS: usize = 4;

/// `table[i][j] = g^(j * 2^(4i))`, so `g^s` is a product of one entry per nibble.
#[derive(Debug)]
struct FixedBase {
    table: Vec<Vec<BigUint>>,
}

impl FixedBase {
    fn new(g: &BigUint, p: &BigUint, exp_bits: u64) -> Self {
        let windows = (exp_bits as usize).div_ceil(WINDOW_BITS);
        let mut table = Vec::with_capacity(windows);
        let mut base = g.clone();
        for _ in 0..windows {
            let mut row = Vec::with_capacity(1 << WINDOW_BITS);
            row.push(BigUint::one());
            for j in 1..(1 << WINDOW_BITS) {
                let next = (&row[j - 1] * &base) % p;
                row.push(next);
            }
            base = (&row[(1 << WINDOW_BITS) - 1] * &base) % p;
            table.push(row);
        }
        Self { table }
    }

    fn pow(&self, exp: &BigUint, p: &BigUint) -> BigUint {
        let mut acc = BigUint::one();
        for (i, byte) in exp.to_bytes_le().iter().enumerate() {
            for half in 0..2 {
                let nibble = ((byte >> (4 * half)) & 0x0f) as usize;
                if nibble != 0 {
                    acc = (&acc * &self.table[2 * i + half][nibble]) % p;
                }
            }
        }
        acc
    }
}

/// Public group parameters `(p, q, g)`.
#[derive(Clone)]
pub struct GroupParams {
    p: BigUint,
    q: BigUint,
    g: BigUint,
    tier: Tier,
    width: usize,
    native: Option<Native>,
    fixed_base: Arc<OnceLock<FixedBase>>,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("tier", &self.tier)
            .field("p_bits", &self.p.bits())
            .field("q_bits", &self.q.bits())
            .field("g", &self.g)
            .finish()
    }
}

impl PartialEq for GroupParams {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.q == other.q && self.g == other.g
    }
}

impl GroupParams {
    /// Validates and builds parameters: `p`, `q` prime, `q | p - 1`, `g` of order `q`.
    pub fn new(p: BigUint, q: BigUint, g: BigUint, tier: Tier) -> Result<Self> {
        let invalid = |msg: &str| Err(Error::InvalidGroupParams(msg.to_string()));
        if p < BigUint::from(5u32) || q < BigUint::from(3u32) {
            return invalid("modulus and subgroup order too small");
        }
        if !is_probable_prime(&p) {
            return invalid("p is not prime");
        }
        if !is_probable_prime(&q) {
            return invalid("q is not prime");
        }
        if !(&p - 1u32).is_multiple_of(&q) {
            return invalid("q does not divide p - 1");
        }
        if g.is_zero() || g.is_one() || g >= p {
            return invalid("generator must lie in (1, p)");
        }
        if !g.modpow(&q, &p).is_one() {
            return invalid("generator does not have order q");
        }
        Ok(Self::unchecked(p, q, g, tier))
    }

    fn unchecked(p: BigUint, q: BigUint, g: BigUint, tier: Tier) -> Self {
        let width = (p.bits() as usize).div_ceil(8);
        let native = match (p.to_u64(), q.to_u64(), g.to_u64()) {
            (Some(p), Some(q), Some(g)) if p < (1 << 63) => Some(Native { p, q, g }),
            _ => None,
        };
        Self {
            p,
            q,
            g,
            tier,
            width,
            native,
            fixed_base: Arc::new(OnceLock::new()),
        }
    }

    /// `(p, q, g) = (23, 11, 4)`: small enough for brute-force oracles.
    pub fn tiny() -> Self {
        Self::new(23u32.into(), 11u32.into(), 4u32.into(), Tier::Test).expect("tiny group is valid")
    }

    /// 62-bit safe-prime group used for fast end-to-end runs.
    pub fn test() -> Self {
        static TEST: OnceLock<GroupParams> = OnceLock::new();
        TEST.get_or_init(|| load_constants("test", Tier::Test).expect("test constants are valid"))
            .clone()
    }

    /// 2048-bit safe-prime group.
    pub fn demo() -> Self {
        static DEMO: OnceLock<GroupParams> = OnceLock::new();
        DEMO.get_or_init(|| load_constants("demo", Tier::Demo).expect("demo constants are valid"))
            .clone()
    }

    pub fn for_tier(tier: Tier) -> Self {
        match tier {
            Tier::Test => Self::test(),
            Tier::Demo => Self::demo(),
        }
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn generator(&self) -> Element {
        Element(self.g.clone())
    }

    /// Bytes per serialized scalar or element.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn identity(&self) -> Element {
        Element(BigUint::one())
    }

    pub fn scalar(&self, value: impl Into<BigUint>) -> Scalar {
        Scalar(value.into() % &self.q)
    }

    pub fn zero(&self) -> Scalar {
        Scalar(BigUint::zero())
    }

    pub fn add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        if let Some(n) = self.native {
            let (a, b) = (a.0.to_u64().unwrap(), b.0.to_u64().unwrap());
            return Scalar(BigUint::from(
                ((a as u128 + b as u128) % n.q as u128) as u64,
            ));
        }
        let mut sum = &a.0 + &b.0;
        if sum >= self.q {
            sum -= &self.q;
        }
        Scalar(sum)
    }

    pub fn neg(&self, a: &Scalar) -> Scalar {
        if a.0.is_zero() {
            a.clone()
        } else {
            Scalar(&self.q - &a.0)
        }
    }

    pub fn sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        self.add(a, &self.neg(b))
    }

    /// Maps a signed integer with `|x| < q/2` to its residue mod `q`.
    pub fn encode_signed(&self, x: i64) -> Result<Scalar> {
        let magnitude = BigUint::from(x.unsigned_abs());
        if &magnitude * 2u32 >= self.q {
            return Err(Error::ScalarOutOfRange { value: x as i128 });
        }
        let s = Scalar(magnitude);
        Ok(if x < 0 { self.neg(&s) } else { s })
    }

    /// Centered lift of a scalar back to an integer in `(-q/2, q/2)`.
    pub fn decode_signed(&self, s: &Scalar) -> BigInt {
        if &s.0 * 2u32 > self.q {
            BigInt::from_biguint(Sign::Minus, &self.q - &s.0)
        } else {
            BigInt::from(s.0.clone())
        }
    }

    /// Like [`decode_signed`](Self::decode_signed), saturated to the `i64` range.
    pub fn decode_saturating(&self, s: &Scalar) -> i64 {
        let v = self.decode_signed(s);
        v.to_i64().unwrap_or(if v.sign() == Sign::Minus {
            i64::MIN
        } else {
            i64::MAX
        })
    }

    /// `g^s mod p`.
    pub fn commit(&self, s: &Scalar) -> Commitment {
        if let Some(n) = self.native {
            return Element(BigUint::from(n.pow(n.g, s.0.to_u64().unwrap())));
        }
        let table = self
            .fixed_base
            .get_or_init(|| FixedBase::new(&self.g, &self.p, self.q.bits()));
        Element(table.pow(&s.0, &self.p))
    }

    /// `base^s mod p` for an arbitrary base.
    pub fn pow(&self, base: &Element, s: &Scalar) -> Element {
        if let Some(n) = self.native {
            return Element(BigUint::from(
                n.pow(base.0.to_u64().unwrap(), s.0.to_u64().unwrap()),
            ));
        }
        Element(base.0.modpow(&s.0, &self.p))
    }

    pub fn combine(&self, a: &Element, b: &Element) -> Element {
        if let Some(n) = self.native {
            return Element(BigUint::from(
                n.mul(a.0.to_u64().unwrap(), b.0.to_u64().unwrap()),
            ));
        }
        Element((&a.0 * &b.0) % &self.p)
    }

    pub fn invert(&self, a: &Element) -> Element {
        if let Some(n) = self.native {
            // a is in the order-q subgroup, so a^(q-1) = a^-1.
            return Element(BigUint::from(n.pow(a.0.to_u64().unwrap(), n.q - 1)));
        }
        Element(
            a.0.modinv(&self.p)
                .expect("subgroup elements are invertible"),
        )
    }

    pub fn is_member(&self, a: &Element) -> bool {
        !a.0.is_zero() && a.0 < self.p && a.0.modpow(&self.q, &self.p).is_one()
    }

    /// Uniform scalar in `[0, q)` by rejection sampling.
    pub fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        if let Some(n) = self.native {
            let bound = u64::MAX - u64::MAX % n.q;
            loop {
                let v = rng.next_u64();
                if v < bound {
                    return Scalar(BigUint::from(v % n.q));
                }
            }
        }
        let bits = self.q.bits() as usize;
        let bytes = bits.div_ceil(8);
        let excess = bytes * 8 - bits;
        let mut buf = vec![0u8; bytes];
        loop {
            rng.fill_bytes(&mut buf);
            buf[0] &= 0xff >> excess;
            let v = BigUint::from_bytes_be(&buf);
            if v < self.q {
                return Scalar(v);
            }
        }
    }

    pub fn scalar_to_bytes(&self, s: &Scalar, out: &mut Vec<u8>) {
        push_fixed(&s.0, self.width, out);
    }

    pub fn element_to_bytes(&self, e: &Element, out: &mut Vec<u8>) {
        push_fixed(&e.0, self.width, out);
    }

    pub fn scalar_from_bytes(&self, bytes: &[u8]) -> Result<Scalar> {
        let v = BigUint::from_bytes_be(bytes);
        if v >= self.q {
            return Err(Error::Malformed("scalar not reduced mod q".into()));
        }
        Ok(Scalar(v))
    }

    pub fn element_from_bytes(&self, bytes: &[u8]) -> Result<Element> {
        let v = BigUint::from_bytes_be(bytes);
        if v.is_zero() || v >= self.p {
            return Err(Error::Malformed("element outside Z_p^*".into()));
        }
        Ok(Element(v))
    }
}

fn push_fixed(v: &BigUint, width: usize, out: &mut Vec<u8>) {
    let bytes = v.to_bytes_be();
    let bytes: &[u8] = if v.is_zero() { &[] } else { &bytes };
    out.extend(std::iter::repeat_n(0u8, width - bytes.len()));
    out.extend_from_slice(bytes);
}

#[derive(Deserialize)]
struct ConstantsFile {
    version: u32,
    test: ConstantEntry,
    demo: ConstantEntry,
}

#[derive(Deserialize)]
struct ConstantEntry {
    p: String,
    g: String,
}

fn load_constants(section: &str, tier: Tier) -> Result<GroupParams> {
    let file: ConstantsFile =
        toml::from_str(CONSTANTS).map_err(|e| Error::InvalidGroupParams(e.to_string()))?;
    if file.version != 1 {
        return Err(Error::InvalidGroupParams(format!(
            "unsupported constants version {}",
            file.version
        )));
    }
    let entry = match section {
        "test" => &file.test,
        _ => &file.demo,
    };
    let parse = |s: &str| {
        let cleaned: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        BigUint::parse_bytes(cleaned.as_bytes(), 16)
            .ok_or_else(|| Error::InvalidGroupParams(format!("bad hex in [{section}]")))
    };
    let p = parse(&entry.p)?;
    let g = parse(&entry.g)?;
    let q = (&p - 1u32) >> 1;
    GroupParams::new(p, q, g, tier)
}

const SMALL_PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Trial division by small primes, then Miller-Rabin with the first twelve
/// prime bases (deterministic below 2^64).
pub fn is_probable_prime(n: &BigUint) -> bool {
    if *n < BigUint::from(2u32) {
        return false;
    }
    for &sp in &SMALL_PRIMES {
        let sp = BigUint::from(sp);
        if *n == sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let twos = n_minus_one.trailing_zeros().unwrap_or(0);
    let odd = &n_minus_one >> twos;
    'bases: for &a in &SMALL_PRIMES {
        let mut x = BigUint::from(a).modpow(&odd, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..twos {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'bases;
            }
        }
        return false;
    }
    true
}
