//! Binary format for keys and ciphertexts.
//!
//! Layout: magic `HEGW`, `u16` version, `u8` kind, `u8` log_n, `u32`
//! level bits, `u32` scale bits, `u32` slots, `u32` ct depth, `u32` pt depth,
//! then a `u32` polynomial count and for each polynomial its `u32` bit width,
//! a `u64` limb count and the little-endian limbs. All integers little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::cipher::{Ciphertext, Depth};
use super::keys::{EvaluationKey, KeySwitchKey, PublicKey, RotationDirection, RotationKeySet, SecretKey};
use super::ring::RingElement;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HEGW";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Ciphertext = 1,
    PublicKey = 2,
    EvaluationKey = 3,
    RotationKeys = 4,
    SecretKey = 5,
}

impl Kind {
    fn from_u8(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Kind::Ciphertext,
            2 => Kind::PublicKey,
            3 => Kind::EvaluationKey,
            4 => Kind::RotationKeys,
            5 => Kind::SecretKey,
            _ => return Err(Error::Format(format!("unknown object kind {b}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub kind: Kind,
    pub log_n: u8,
    pub level_bits: u32,
    pub scale_bits: u32,
    pub slots: u32,
    pub depth: Depth,
}

fn write_header<W: Write>(w: &mut W, h: &Header) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[h.kind as u8, h.log_n])?;
    for v in [h.level_bits, h.scale_bits, h.slots, h.depth.ct, h.depth.pt] {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v)?;
    let version = u16::from_le_bytes(v);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let mut kb = [0u8; 2];
    r.read_exact(&mut kb)?;
    let kind = Kind::from_u8(kb[0])?;
    Ok(Header {
        kind,
        log_n: kb[1],
        level_bits: read_u32(r)?,
        scale_bits: read_u32(r)?,
        slots: read_u32(r)?,
        depth: Depth {
            ct: read_u32(r)?,
            pt: read_u32(r)?,
        },
    })
}

fn write_poly<W: Write>(w: &mut W, p: &RingElement) -> Result<()> {
    w.write_all(&p.bits().to_le_bytes())?;
    w.write_all(&(p.limbs().len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(p.limbs().len() * 8);
    for l in p.limbs() {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_poly<R: Read>(r: &mut R, n: usize) -> Result<RingElement> {
    let bits = read_u32(r)?;
    let count = read_u64(r)? as usize;
    if count != n * (bits as usize).div_ceil(64).max(1) {
        return Err(Error::Format(format!(
            "limb count {count} inconsistent with n = {n}, bits = {bits}"
        )));
    }
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    let limbs = buf
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    RingElement::from_limbs(n, bits, limbs).ok_or_else(|| Error::Format("bad polynomial".into()))
}

fn write_polys<W: Write>(w: &mut W, h: &Header, polys: &[&RingElement]) -> Result<()> {
    write_header(w, h)?;
    w.write_all(&(polys.len() as u32).to_le_bytes())?;
    for p in polys {
        write_poly(w, p)?;
    }
    Ok(())
}

fn read_polys<R: Read>(r: &mut R, expect: Kind) -> Result<(Header, Vec<RingElement>)> {
    let h = read_header(r)?;
    if h.kind != expect {
        return Err(Error::Format(format!("expected {expect:?}, found {:?}", h.kind)));
    }
    let n = 1usize << h.log_n;
    let count = read_u32(r)? as usize;
    let polys = (0..count).map(|_| read_poly(r, n)).collect::<Result<Vec<_>>>()?;
    Ok((h, polys))
}

fn key_header(kind: Kind, p: &RingElement) -> Header {
    Header {
        kind,
        log_n: p.n().trailing_zeros() as u8,
        level_bits: p.bits(),
        scale_bits: 0,
        slots: (p.n() / 2) as u32,
        depth: Depth::default(),
    }
}

pub fn write_ciphertext<W: Write>(w: &mut W, ct: &Ciphertext) -> Result<()> {
    let h = Header {
        kind: Kind::Ciphertext,
        log_n: ct.log_n() as u8,
        level_bits: ct.level_bits(),
        scale_bits: ct.scale_bits,
        slots: ct.slots as u32,
        depth: ct.depth,
    };
    write_polys(w, &h, &[&ct.c0, &ct.c1])
}

pub fn read_ciphertext<R: Read>(r: &mut R) -> Result<Ciphertext> {
    let (h, mut p) = read_polys(r, Kind::Ciphertext)?;
    if p.len() != 2 || p[0].bits() != h.level_bits || p[1].bits() != h.level_bits {
        return Err(Error::Format("ciphertext needs two polynomials at its level".into()));
    }
    let c1 = p.pop().unwrap();
    let c0 = p.pop().unwrap();
    Ok(Ciphertext {
        c0,
        c1,
        scale_bits: h.scale_bits,
        slots: h.slots as usize,
        depth: h.depth,
    })
}

pub fn ciphertext_to_bytes(ct: &Ciphertext) -> Vec<u8> {
    let mut v = Vec::with_capacity(ct.byte_size() + 64);
    write_ciphertext(&mut v, ct).expect("writing to memory");
    v
}

pub fn ciphertext_from_bytes(mut bytes: &[u8]) -> Result<Ciphertext> {
    read_ciphertext(&mut bytes)
}

pub fn write_public_key<W: Write>(w: &mut W, pk: &PublicKey) -> Result<()> {
    write_polys(w, &key_header(Kind::PublicKey, &pk.b), &[&pk.b, &pk.a])
}

pub fn read_public_key<R: Read>(r: &mut R) -> Result<PublicKey> {
    let (_, mut p) = read_polys(r, Kind::PublicKey)?;
    if p.len() != 2 {
        return Err(Error::Format("public key needs two polynomials".into()));
    }
    let a = p.pop().unwrap();
    let b = p.pop().unwrap();
    Ok(PublicKey { b, a })
}

pub fn write_evaluation_key<W: Write>(w: &mut W, evk: &EvaluationKey) -> Result<()> {
    write_polys(w, &key_header(Kind::EvaluationKey, &evk.0.b), &[&evk.0.b, &evk.0.a])
}

pub fn read_evaluation_key<R: Read>(r: &mut R) -> Result<EvaluationKey> {
    let (_, mut p) = read_polys(r, Kind::EvaluationKey)?;
    if p.len() != 2 {
        return Err(Error::Format("evaluation key needs two polynomials".into()));
    }
    let a = p.pop().unwrap();
    let b = p.pop().unwrap();
    Ok(EvaluationKey(KeySwitchKey::new(b, a)))
}

const TAG_RIGHT: u8 = 0;
const TAG_LEFT: u8 = 1;
const TAG_CONJ: u8 = 2;

/// Rotation keys: header, `u32` entry count, then per entry a `u8` tag
/// (right, left, conjugation), a `u64` amount and two polynomials.
pub fn write_rotation_keys<W: Write>(w: &mut W, keys: &RotationKeySet) -> Result<()> {
    let any = keys
        .right
        .values()
        .chain(keys.left.values())
        .chain(keys.conj.iter())
        .next()
        .ok_or_else(|| Error::Format("empty rotation key set".into()))?;
    write_header(w, &key_header(Kind::RotationKeys, &any.b))?;
    let mut entries: Vec<(u8, u64, &KeySwitchKey)> = Vec::new();
    entries.extend(keys.right.iter().map(|(a, k)| (TAG_RIGHT, *a as u64, k)));
    entries.extend(keys.left.iter().map(|(a, k)| (TAG_LEFT, *a as u64, k)));
    entries.extend(keys.conj.iter().map(|k| (TAG_CONJ, 0u64, k)));
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (tag, amount, key) in entries {
        w.write_all(&[tag])?;
        w.write_all(&amount.to_le_bytes())?;
        write_poly(w, &key.b)?;
        write_poly(w, &key.a)?;
    }
    Ok(())
}

pub fn read_rotation_keys<R: Read>(r: &mut R) -> Result<RotationKeySet> {
    let h = read_header(r)?;
    if h.kind != Kind::RotationKeys {
        return Err(Error::Format(format!("expected rotation keys, found {:?}", h.kind)));
    }
    let n = 1usize << h.log_n;
    let count = read_u32(r)?;
    let mut set = RotationKeySet::empty();
    for _ in 0..count {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let amount = read_u64(r)? as usize;
        let b = read_poly(r, n)?;
        let a = read_poly(r, n)?;
        let key = KeySwitchKey::new(b, a);
        match tag[0] {
            TAG_RIGHT => set.insert(RotationDirection::Right, amount, key),
            TAG_LEFT => set.insert(RotationDirection::Left, amount, key),
            TAG_CONJ => set.set_conjugation(Some(key)),
            t => return Err(Error::Format(format!("unknown rotation key tag {t}"))),
        }
    }
    Ok(set)
}

/// Secret key as one signed byte per coefficient after the header.
pub fn write_secret_key<W: Write>(w: &mut W, sk: &SecretKey) -> Result<()> {
    let n = sk.coeffs().len();
    let h = Header {
        kind: Kind::SecretKey,
        log_n: n.trailing_zeros() as u8,
        level_bits: 0,
        scale_bits: 0,
        slots: (n / 2) as u32,
        depth: Depth::default(),
    };
    write_header(w, &h)?;
    let bytes: Vec<u8> = sk.coeffs().iter().map(|&c| c as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_secret_key<R: Read>(r: &mut R) -> Result<SecretKey> {
    let h = read_header(r)?;
    if h.kind != Kind::SecretKey {
        return Err(Error::Format(format!("expected secret key, found {:?}", h.kind)));
    }
    let mut bytes = vec![0u8; 1usize << h.log_n];
    r.read_exact(&mut bytes)?;
    let coeffs: Vec<i8> = bytes.into_iter().map(|b| b as i8).collect();
    if coeffs.iter().any(|c| !(-1..=1).contains(c)) {
        return Err(Error::Format("secret key coefficients must be ternary".into()));
    }
    Ok(SecretKey::from_coeffs(coeffs))
}

pub fn save<T, F>(path: &Path, value: &T, f: F) -> Result<()>
where
    F: Fn(&mut std::io::BufWriter<std::fs::File>, &T) -> Result<()>,
{
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    f(&mut w, value)?;
    w.flush()?;
    Ok(())
}

pub fn load<T, F>(path: &Path, f: F) -> Result<T>
where
    F: Fn(&mut std::io::BufReader<std::fs::File>) -> Result<T>,
{
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    f(&mut r)
}
