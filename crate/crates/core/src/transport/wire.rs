//! Binary wire format.
//!
//! Envelope header (18 bytes): version `u8`, tag `u8`, round `u32`, sender
//! `u32`, payload length `u64`, then the payload. Integers are little-endian,
//! vectors carry a `u32` count, and scalars and group elements are fixed-width
//! big-endian at the modulus width. On a stream the header's length field
//! doubles as the frame length prefix.

use std::io::{self, Read};

use crate::error::{Error, Result};
use crate::group::{Element, GroupParams, Scalar};
use crate::masking::{MaskedEntry, MaskedSubmission};
use crate::protocol::{
    FlagReason, GlobalUpdate, Message, MessageKind, PlainSubmission, Submission, Verdict,
};

pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;
/// Largest payload accepted from a peer.
pub const MAX_PAYLOAD: u64 = 1 << 30;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub version: u8,
    pub tag: u8,
    pub round: u32,
    pub sender: u32,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(self.version);
        out.push(self.tag);
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&self.sender.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses exactly one envelope; trailing bytes are an error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (version, tag, round, sender, len) = parse_header(bytes)?;
        let total = HEADER_LEN + len as usize;
        if bytes.len() < total {
            return Err(Error::Truncated {
                needed: total,
                available: bytes.len(),
            });
        }
        if bytes.len() > total {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after frame",
                bytes.len() - total
            )));
        }
        Ok(Self {
            version,
            tag,
            round,
            sender,
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}

fn parse_header(bytes: &[u8]) -> Result<(u8, u8, u32, u32, u64)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let version = bytes[0];
    if version != VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let tag = bytes[1];
    if MessageKind::from_tag(tag).is_none() {
        return Err(Error::UnknownTag(tag));
    }
    let round = u32::from_le_bytes(bytes[2..6].try_into().unwrap());
    let sender = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    let len = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(Error::LengthOverflow(len));
    }
    Ok((version, tag, round, sender, len))
}

/// Reads one whole frame from a stream. `Ok(None)` on clean end of stream.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Option<Vec<u8>>> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(Error::Truncated {
                    needed: HEADER_LEN,
                    available: filled,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (.., len) = parse_header(&header)?;
    let mut frame = header.to_vec();
    frame.resize(HEADER_LEN + len as usize, 0);
    reader
        .read_exact(&mut frame[HEADER_LEN..])
        .map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Truncated {
                needed: HEADER_LEN + len as usize,
                available: HEADER_LEN,
            },
            _ => e.into(),
        })?;
    Ok(Some(frame))
}

struct Writer<'a> {
    out: Vec<u8>,
    params: &'a GroupParams,
}

impl<'a> Writer<'a> {
    fn new(params: &'a GroupParams) -> Self {
        Self {
            out: Vec::new(),
            params,
        }
    }

    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }

    fn id(&mut self, v: usize) {
        self.u32(v as u32);
    }

    fn count(&mut self, n: usize) {
        self.u32(n as u32);
    }

    fn ids(&mut self, ids: &[usize]) {
        self.count(ids.len());
        for &i in ids {
            self.id(i);
        }
    }

    fn f64s(&mut self, vs: &[f64]) {
        self.count(vs.len());
        for v in vs {
            self.u64(v.to_bits());
        }
    }

    fn i64s(&mut self, vs: &[i64]) {
        self.count(vs.len());
        for v in vs {
            self.out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.out.extend_from_slice(b);
    }

    fn element(&mut self, e: &Element) {
        self.params.element_to_bytes(e, &mut self.out);
    }

    fn scalars(&mut self, vs: &[Scalar]) {
        self.count(vs.len());
        for s in vs {
            self.params.scalar_to_bytes(s, &mut self.out);
        }
    }

    fn elements(&mut self, vs: &[Element]) {
        self.count(vs.len());
        for e in vs {
            self.element(e);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    params: &'a GroupParams,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], params: &'a GroupParams) -> Self {
        Self {
            buf,
            pos: 0,
            params,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(Error::Truncated {
                needed: self.pos.saturating_add(n),
                available: self.buf.len(),
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn id(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    /// Element count, checked against the bytes left so a hostile count
    /// cannot trigger a huge allocation.
    fn count(&mut self, item_size: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        let needed = n.saturating_mul(item_size.max(1));
        if needed > self.buf.len() - self.pos {
            return Err(Error::Truncated {
                needed: self.pos.saturating_add(needed),
                available: self.buf.len(),
            });
        }
        Ok(n)
    }

    fn ids(&mut self) -> Result<Vec<usize>> {
        let n = self.count(4)?;
        (0..n).map(|_| self.id()).collect()
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.count(8)?;
        (0..n).map(|_| Ok(f64::from_bits(self.u64()?))).collect()
    }

    fn i64s(&mut self) -> Result<Vec<i64>> {
        let n = self.count(8)?;
        (0..n).map(|_| Ok(self.u64()? as i64)).collect()
    }

    fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.u64()?;
        if n > MAX_PAYLOAD {
            return Err(Error::LengthOverflow(n));
        }
        Ok(self.take(n as usize)?.to_vec())
    }

    fn element(&mut self) -> Result<Element> {
        let w = self.params.width();
        let b = self.take(w)?;
        self.params.element_from_bytes(b)
    }

    fn scalars(&mut self) -> Result<Vec<Scalar>> {
        let w = self.params.width();
        let n = self.count(w)?;
        (0..n)
            .map(|_| self.params.scalar_from_bytes(self.take(w)?))
            .collect()
    }

    fn elements(&mut self) -> Result<Vec<Element>> {
        let n = self.count(self.params.width())?;
        (0..n).map(|_| self.element()).collect()
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Malformed(format!(
                "{} unread payload bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Count-prefixed scalar vector, the plaintext of a sealed random.
pub fn encode_scalars(values: &[Scalar], params: &GroupParams) -> Vec<u8> {
    let mut w = Writer::new(params);
    w.scalars(values);
    w.out
}

pub fn decode_scalars(bytes: &[u8], params: &GroupParams) -> Result<Vec<Scalar>> {
    let mut r = Reader::new(bytes, params);
    let v = r.scalars()?;
    r.finish()?;
    Ok(v)
}

pub fn encode_payload(message: &Message, params: &GroupParams) -> Vec<u8> {
    let mut w = Writer::new(params);
    match message {
        Message::Register { public_key } => w.element(public_key),
        Message::TopologyAssign {
            client,
            identifier,
            groups,
            neighbors,
        } => {
            w.id(*client);
            w.ids(identifier);
            w.ids(groups);
            w.count(neighbors.len());
            for (id, pk) in neighbors {
                w.id(*id);
                w.element(pk);
            }
        }
        Message::SealedRandom {
            from,
            to,
            round,
            ciphertext,
        } => {
            w.id(*from);
            w.id(*to);
            w.u32(*round);
            w.bytes(ciphertext);
        }
        Message::DropoutNotice { round, dropped } => {
            w.u32(*round);
            w.ids(dropped);
        }
        Message::Submission(s) => {
            w.id(s.masked.client);
            w.u32(s.masked.round);
            w.f64s(&s.scales);
            w.count(s.masked.entries.len());
            for e in &s.masked.entries {
                w.id(e.group);
                w.scalars(&e.masked);
                w.elements(&e.commitments);
            }
        }
        Message::PlainSubmission(p) => {
            w.id(p.client);
            w.u32(p.round);
            w.f64s(&p.scales);
            w.scalars(&p.codes);
        }
        Message::GlobalModel(g) => {
            w.u32(g.round);
            w.u8(u8::from(g.void));
            w.u64(g.divisor);
            w.i64s(&g.sum);
            w.f64s(&g.scales);
        }
        Message::Verdict(v) => {
            w.u32(v.round);
            w.count(v.flagged.len());
            for (g, reason) in &v.flagged {
                w.id(*g);
                w.u8(reason.code());
            }
            w.ids(&v.malicious);
            w.ids(&v.dropped);
        }
    }
    w.out
}

pub fn decode_payload(kind: MessageKind, payload: &[u8], params: &GroupParams) -> Result<Message> {
    let mut r = Reader::new(payload, params);
    let msg = match kind {
        MessageKind::Register => Message::Register {
            public_key: r.element()?,
        },
        MessageKind::TopologyAssign => {
            let client = r.id()?;
            let identifier = r.ids()?;
            let groups = r.ids()?;
            let n = r.count(4 + params.width())?;
            let neighbors = (0..n)
                .map(|_| Ok((r.id()?, r.element()?)))
                .collect::<Result<_>>()?;
            Message::TopologyAssign {
                client,
                identifier,
                groups,
                neighbors,
            }
        }
        MessageKind::SealedRandom => Message::SealedRandom {
            from: r.id()?,
            to: r.id()?,
            round: r.u32()?,
            ciphertext: r.bytes()?,
        },
        MessageKind::DropoutNotice => Message::DropoutNotice {
            round: r.u32()?,
            dropped: r.ids()?,
        },
        MessageKind::Submission => {
            let client = r.id()?;
            let round = r.u32()?;
            let scales = r.f64s()?;
            let n = r.count(12)?;
            let entries = (0..n)
                .map(|_| {
                    Ok(MaskedEntry {
                        group: r.id()?,
                        masked: r.scalars()?,
                        commitments: r.elements()?,
                    })
                })
                .collect::<Result<_>>()?;
            Message::Submission(Submission {
                masked: MaskedSubmission {
                    client,
                    round,
                    entries,
                },
                scales,
            })
        }
        MessageKind::PlainSubmission => Message::PlainSubmission(PlainSubmission {
            client: r.id()?,
            round: r.u32()?,
            scales: r.f64s()?,
            codes: r.scalars()?,
        }),
        MessageKind::GlobalModel => {
            let round = r.u32()?;
            let void = match r.u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::Malformed(format!("void flag {b}"))),
            };
            Message::GlobalModel(GlobalUpdate {
                round,
                void,
                divisor: r.u64()?,
                sum: r.i64s()?,
                scales: r.f64s()?,
            })
        }
        MessageKind::Verdict => {
            let round = r.u32()?;
            let n = r.count(5)?;
            let flagged = (0..n)
                .map(|_| {
                    let g = r.id()?;
                    let code = r.u8()?;
                    let reason = FlagReason::from_code(code)
                        .ok_or_else(|| Error::Malformed(format!("flag reason {code}")))?;
                    Ok((g, reason))
                })
                .collect::<Result<_>>()?;
            Message::Verdict(Verdict {
                round,
                flagged,
                malicious: r.ids()?,
                dropped: r.ids()?,
            })
        }
    };
    r.finish()?;
    Ok(msg)
}

/// Full frame for `message` sent by `sender`.
pub fn encode(message: &Message, sender: u32, params: &GroupParams) -> Vec<u8> {
    Envelope {
        version: VERSION,
        tag: message.kind().tag(),
        round: message.round(),
        sender,
        payload: encode_payload(message, params),
    }
    .to_bytes()
}

/// Parses a frame into `(sender, message)`, checking the header round.
pub fn decode(bytes: &[u8], params: &GroupParams) -> Result<(u32, Message)> {
    let env = Envelope::from_bytes(bytes)?;
    let kind = MessageKind::from_tag(env.tag).ok_or(Error::UnknownTag(env.tag))?;
    let msg = decode_payload(kind, &env.payload, params)?;
    if msg.round() != env.round {
        return Err(Error::Malformed(format!(
            "header round {} but payload round {}",
            env.round,
            msg.round()
        )));
    }
    Ok((env.sender, msg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore};
    use rand_chacha::ChaCha20Rng;

    use crate::seeds::derive_rng;

    fn random_message(rng: &mut ChaCha20Rng, gp: &GroupParams) -> Message {
        let ids = |rng: &mut ChaCha20Rng| {
            (0..rng.random_range(0..5))
                .map(|_| rng.random_range(0..100))
                .collect::<Vec<usize>>()
        };
        let el = |rng: &mut ChaCha20Rng| gp.commit(&gp.random_scalar(rng));
        let scalars = |rng: &mut ChaCha20Rng, n: usize| {
            (0..n).map(|_| gp.random_scalar(rng)).collect::<Vec<_>>()
        };
        let f64s = |rng: &mut ChaCha20Rng| {
            (0..rng.random_range(0..4))
                .map(|_| rng.random::<f64>() * 3.0)
                .collect::<Vec<_>>()
        };
        match rng.random_range(0..8) {
            0 => Message::Register {
                public_key: el(rng),
            },
            1 => Message::TopologyAssign {
                client: rng.random_range(0..64),
                identifier: ids(rng),
                groups: ids(rng),
                neighbors: (0..rng.random_range(0..4)).map(|i| (i, el(rng))).collect(),
            },
            2 => {
                let mut ciphertext = vec![0u8; rng.random_range(0..50)];
                rng.fill_bytes(&mut ciphertext);
                Message::SealedRandom {
                    from: rng.random_range(0..64),
                    to: rng.random_range(0..64),
                    round: rng.random(),
                    ciphertext,
                }
            }
            3 => Message::DropoutNotice {
                round: rng.random(),
                dropped: ids(rng),
            },
            4 => {
                let len = rng.random_range(0..4);
                let entries = (0..rng.random_range(0..4))
                    .map(|g| MaskedEntry {
                        group: g,
                        masked: scalars(rng, len),
                        commitments: (0..len).map(|_| el(rng)).collect(),
                    })
                    .collect();
                Message::Submission(Submission {
                    masked: MaskedSubmission {
                        client: rng.random_range(0..64),
                        round: rng.random(),
                        entries,
                    },
                    scales: f64s(rng),
                })
            }
            5 => {
                let n = rng.random_range(0..5);
                Message::PlainSubmission(PlainSubmission {
                    client: 3,
                    round: rng.random(),
                    scales: f64s(rng),
                    codes: scalars(rng, n),
                })
            }
            6 => Message::GlobalModel(GlobalUpdate {
                round: rng.random(),
                sum: (0..rng.random_range(0..5))
                    .map(|_| rng.random::<i64>())
                    .collect(),
                divisor: rng.random(),
                scales: f64s(rng),
                void: rng.random(),
            }),
            _ => Message::Verdict(Verdict {
                round: rng.random(),
                flagged: (0..rng.random_range(0..4))
                    .map(|g| (g, FlagReason::from_code(rng.random_range(1..=3)).unwrap()))
                    .collect(),
                malicious: ids(rng),
                dropped: ids(rng),
            }),
        }
    }

    #[test]
    fn round_trip_thousand_random_messages() {
        let gp = GroupParams::test();
        let mut rng = derive_rng(7, "wire", &[]);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..1000 {
            let msg = random_message(&mut rng, &gp);
            seen.insert(msg.kind());
            let sender = rng.random::<u32>();
            let bytes = encode(&msg, sender, &gp);
            assert_eq!(decode(&bytes, &gp).unwrap(), (sender, msg));
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn empty_payload_frame_is_eighteen_bytes() {
        let env = Envelope {
            version: VERSION,
            tag: 4,
            round: 1,
            sender: 2,
            payload: vec![],
        };
        let bytes = env.to_bytes();
        assert_eq!(bytes.len(), 18);
        assert_eq!(Envelope::from_bytes(&bytes).unwrap(), env);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let gp = GroupParams::test();
        let msg = Message::DropoutNotice {
            round: 0x0102_0304,
            dropped: vec![7],
        };
        let bytes = encode(&msg, 0x0a0b_0c0d, &gp);
        assert_eq!(&bytes[..10], &[1, 4, 4, 3, 2, 1, 0x0d, 0x0c, 0x0b, 0x0a]);
        assert_eq!(u64::from_le_bytes(bytes[10..18].try_into().unwrap()), 12);
        assert_eq!(&bytes[18..], &[4, 3, 2, 1, 1, 0, 0, 0, 7, 0, 0, 0]);
    }

    #[test]
    fn submission_carries_one_vector_pair_per_group() {
        let gp = GroupParams::test();
        let entry = |g| MaskedEntry {
            group: g,
            masked: vec![gp.scalar(1u32); 3],
            commitments: vec![gp.generator(); 3],
        };
        let msg = Message::Submission(Submission {
            masked: MaskedSubmission {
                client: 0,
                round: 1,
                entries: vec![entry(0), entry(4)],
            },
            scales: vec![0.5],
        });
        let bytes = encode(&msg, 0, &gp);
        let w = gp.width();
        let per_group = 4 + (4 + 3 * w) * 2;
        assert_eq!(
            bytes.len(),
            HEADER_LEN + 4 + 4 + (4 + 8) + 4 + 2 * per_group
        );
        let Message::Submission(s) = decode(&bytes, &gp).unwrap().1 else {
            panic!()
        };
        assert_eq!(s.masked.entries.len(), 2);
    }

    #[test]
    fn rejects_bad_frames() {
        let gp = GroupParams::test();
        let good = encode(
            &Message::DropoutNotice {
                round: 1,
                dropped: vec![1, 2],
            },
            0,
            &gp,
        );
        assert!(matches!(
            decode(&good[..10], &gp),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            decode(&good[..good.len() - 1], &gp),
            Err(Error::Truncated { .. })
        ));
        let mut v = good.clone();
        v[0] = 2;
        assert!(matches!(decode(&v, &gp), Err(Error::VersionMismatch(2))));
        let mut t = good.clone();
        t[1] = 99;
        assert!(matches!(decode(&t, &gp), Err(Error::UnknownTag(99))));
        let mut l = good.clone();
        l[10..18].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode(&l, &gp), Err(Error::LengthOverflow(_))));
        let mut r = good.clone();
        r[2] = 9;
        assert!(matches!(decode(&r, &gp), Err(Error::Malformed(_))));
        // A hostile vector count must not allocate.
        let mut c = good.clone();
        c[22..26].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode(&c, &gp), Err(Error::Truncated { .. })));
    }

    #[test]
    fn stream_reader_splits_frames() {
        let gp = GroupParams::test();
        let a = encode(
            &Message::DropoutNotice {
                round: 1,
                dropped: vec![],
            },
            0,
            &gp,
        );
        let b = encode(
            &Message::Register {
                public_key: gp.generator(),
            },
            3,
            &gp,
        );
        let joined = [a.clone(), b.clone()].concat();
        let mut cursor = io::Cursor::new(joined);
        assert_eq!(read_frame(&mut cursor).unwrap(), Some(a));
        assert_eq!(read_frame(&mut cursor).unwrap(), Some(b.clone()));
        assert_eq!(read_frame(&mut cursor).unwrap(), None);
        let mut short = io::Cursor::new(b[..b.len() - 2].to_vec());
        assert!(read_frame(&mut short).is_err());
    }

    #[test]
    fn scalar_vector_round_trip() {
        let gp = GroupParams::demo();
        let mut rng = derive_rng(1, "sv", &[]);
        let v: Vec<Scalar> = (0..3).map(|_| gp.random_scalar(&mut rng)).collect();
        let bytes = encode_scalars(&v, &gp);
        assert_eq!(bytes.len(), 4 + 3 * 256);
        assert_eq!(decode_scalars(&bytes, &gp).unwrap(), v);
    }
}
