//! Fixed-width unsigned bit vectors used by the expression evaluator and the
//! simulator. Arithmetic wraps modulo `2^width`.

use std::cmp::Ordering;
use std::fmt;

use smallvec::{smallvec, SmallVec};

type Words = SmallVec<[u64; 2]>;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bits {
    width: u32,
    words: Words,
}

fn word_count(width: u32) -> usize {
    (width as usize).div_ceil(64).max(1)
}

impl Bits {
    pub fn zero(width: u32) -> Self {
        assert!(width >= 1, "zero-width bit vector");
        Bits { width, words: smallvec![0; word_count(width)] }
    }

    /// Builds a vector from `value`, truncated to `width` bits.
    pub fn from_u64(value: u64, width: u32) -> Self {
        let mut b = Bits::zero(width);
        b.words[0] = value;
        b.mask();
        b
    }

    pub fn from_u128(value: u128, width: u32) -> Self {
        let mut b = Bits::zero(width);
        b.words[0] = value as u64;
        if b.words.len() > 1 {
            b.words[1] = (value >> 64) as u64;
        }
        b.mask();
        b
    }

    pub fn from_bool(v: bool) -> Self {
        Bits::from_u64(v as u64, 1)
    }

    /// Parses decimal or `0x`-prefixed hexadecimal text.
    pub fn parse(text: &str, width: u32) -> Option<Self> {
        let t = text.trim().replace('_', "");
        let mut b = Bits::zero(width);
        if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
            if hex.is_empty() {
                return None;
            }
            for c in hex.chars() {
                let d = c.to_digit(16)? as u64;
                b = b.shl_wide(4);
                b.words[0] |= d;
            }
        } else {
            if t.is_empty() {
                return None;
            }
            for c in t.chars() {
                let d = c.to_digit(10)? as u64;
                b = b.mul_small(10).add(&Bits::from_u64(d, width));
            }
        }
        b.mask();
        Some(b)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// Low 64 bits.
    pub fn to_u64(&self) -> u64 {
        self.words[0]
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// True when the value does not fit in `width` bits.
    pub fn exceeds(value: u64, width: u32) -> bool {
        width < 64 && value >> width != 0
    }

    pub fn bit(&self, i: u32) -> bool {
        if i >= self.width {
            return false;
        }
        (self.words[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    fn set_bit(&mut self, i: u32, v: bool) {
        let w = &mut self.words[(i / 64) as usize];
        if v {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    fn mask(&mut self) {
        let n = word_count(self.width);
        self.words.truncate(n);
        while self.words.len() < n {
            self.words.push(0);
        }
        let rem = self.width % 64;
        if rem != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << rem) - 1;
        }
    }

    /// Zero-extends or truncates to `width`.
    pub fn resize(&self, width: u32) -> Bits {
        let mut b = Bits { width, words: self.words.clone() };
        b.mask();
        b
    }

    pub fn add(&self, rhs: &Bits) -> Bits {
        let w = self.width.max(rhs.width);
        let (a, b) = (self.resize(w), rhs.resize(w));
        let mut out = Bits::zero(w);
        let mut carry = 0u64;
        for i in 0..out.words.len() {
            let (s1, c1) = a.words[i].overflowing_add(b.words[i]);
            let (s2, c2) = s1.overflowing_add(carry);
            out.words[i] = s2;
            carry = (c1 as u64) + (c2 as u64);
        }
        out.mask();
        out
    }

    pub fn sub(&self, rhs: &Bits) -> Bits {
        let w = self.width.max(rhs.width);
        let (a, b) = (self.resize(w), rhs.resize(w));
        let mut out = Bits::zero(w);
        let mut borrow = 0u64;
        for i in 0..out.words.len() {
            let (d1, b1) = a.words[i].overflowing_sub(b.words[i]);
            let (d2, b2) = d1.overflowing_sub(borrow);
            out.words[i] = d2;
            borrow = (b1 as u64) + (b2 as u64);
        }
        out.mask();
        out
    }

    /// Full product; result width is the sum of operand widths.
    pub fn mul(&self, rhs: &Bits) -> Bits {
        let w = self.width + rhs.width;
        let mut out = Bits::zero(w);
        let n = out.words.len();
        for (i, &x) in self.words.iter().enumerate() {
            let mut carry: u128 = 0;
            for (j, &y) in rhs.words.iter().enumerate() {
                if i + j >= n {
                    break;
                }
                let cur = out.words[i + j] as u128 + (x as u128) * (y as u128) + carry;
                out.words[i + j] = cur as u64;
                carry = cur >> 64;
            }
            let mut k = i + rhs.words.len();
            while carry != 0 && k < n {
                let cur = out.words[k] as u128 + carry;
                out.words[k] = cur as u64;
                carry = cur >> 64;
                k += 1;
            }
        }
        out.mask();
        out
    }

    fn mul_small(&self, k: u64) -> Bits {
        let mut out = self.clone();
        let mut carry: u128 = 0;
        for w in out.words.iter_mut() {
            let cur = (*w as u128) * (k as u128) + carry;
            *w = cur as u64;
            carry = cur >> 64;
        }
        out.mask();
        out
    }

    fn zip(&self, rhs: &Bits, f: impl Fn(u64, u64) -> u64) -> Bits {
        let w = self.width.max(rhs.width);
        let (a, b) = (self.resize(w), rhs.resize(w));
        let mut out = Bits::zero(w);
        for i in 0..out.words.len() {
            out.words[i] = f(a.words[i], b.words[i]);
        }
        out.mask();
        out
    }

    pub fn xor(&self, rhs: &Bits) -> Bits {
        self.zip(rhs, |a, b| a ^ b)
    }

    pub fn and(&self, rhs: &Bits) -> Bits {
        self.zip(rhs, |a, b| a & b)
    }

    pub fn or(&self, rhs: &Bits) -> Bits {
        self.zip(rhs, |a, b| a | b)
    }

    pub fn not(&self) -> Bits {
        let mut out = self.clone();
        for w in out.words.iter_mut() {
            *w = !*w;
        }
        out.mask();
        out
    }

    fn shl_wide(&self, k: u32) -> Bits {
        let mut out = Bits::zero(self.width);
        for i in (k..self.width).rev() {
            out.set_bit(i, self.bit(i - k));
        }
        out
    }

    pub fn shl(&self, k: u32) -> Bits {
        if self.width <= 64 {
            let v = if k >= 64 { 0 } else { self.words[0] << k };
            return Bits::from_u64(v, self.width);
        }
        self.shl_wide(k)
    }

    pub fn shr(&self, k: u32) -> Bits {
        if self.width <= 64 {
            let v = if k >= 64 { 0 } else { self.words[0] >> k };
            return Bits::from_u64(v, self.width);
        }
        let mut out = Bits::zero(self.width);
        for i in 0..self.width.saturating_sub(k) {
            out.set_bit(i, self.bit(i + k));
        }
        out
    }

    /// Bits `hi..=lo`.
    pub fn slice(&self, hi: u32, lo: u32) -> Bits {
        let w = hi - lo + 1;
        if self.width <= 64 {
            return Bits::from_u64(self.words[0] >> lo, w);
        }
        let mut out = Bits::zero(w);
        for i in 0..w {
            out.set_bit(i, self.bit(lo + i));
        }
        out
    }

    /// Concatenation with `parts[0]` in the most significant position.
    pub fn concat(parts: &[&Bits]) -> Bits {
        let w: u32 = parts.iter().map(|p| p.width).sum();
        let mut out = Bits::zero(w);
        let mut pos = w;
        for p in parts {
            pos -= p.width;
            for i in 0..p.width {
                out.set_bit(pos + i, p.bit(i));
            }
        }
        out
    }

    pub fn mux(sel: &Bits, a: &Bits, b: &Bits) -> Bits {
        if sel.is_zero() {
            b.clone()
        } else {
            a.clone()
        }
    }

    pub fn eq_value(&self, rhs: &Bits) -> bool {
        let w = self.width.max(rhs.width);
        self.resize(w).words == rhs.resize(w).words
    }

    /// Lower-case hexadecimal digits without prefix, zero-padded to the width.
    pub fn to_hex(&self) -> String {
        let digits = (self.width as usize).div_ceil(4);
        let mut s = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let bit = (d * 4) as u32;
            let nib = (0..4).fold(0u32, |acc, i| acc | ((self.bit(bit + i) as u32) << i));
            s.push(std::char::from_digit(nib, 16).unwrap());
        }
        s
    }

    pub fn to_binary(&self) -> String {
        (0..self.width).rev().map(|i| if self.bit(i) { '1' } else { '0' }).collect()
    }
}

impl PartialOrd for Bits {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bits {
    fn cmp(&self, other: &Self) -> Ordering {
        let w = self.width.max(other.width);
        let (a, b) = (self.resize(w), other.resize(w));
        a.words.iter().rev().cmp(b.words.iter().rev())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}'h{}", self.width, self.to_hex())
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

impl serde::Serialize for Bits {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}'h{}", self.width, self.to_hex()))
    }
}
