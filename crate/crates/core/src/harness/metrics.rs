//! Per-round measurements and the stable CSV layout they are written in.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypermesh::{ClientId, GroupId};
use crate::protocol::{FlagReason, MessageKind};
use crate::transport::Traffic;

/// Fraction of attackers identified; 1.0 when there are none.
pub fn tpr(identified: &BTreeSet<ClientId>, truth: &BTreeSet<ClientId>) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    identified.intersection(truth).count() as f64 / truth.len() as f64
}

/// Fraction of benign clients identified.
pub fn fpr(identified: &BTreeSet<ClientId>, truth: &BTreeSet<ClientId>, clients: usize) -> f64 {
    let benign = clients - truth.len();
    if benign == 0 {
        return 0.0;
    }
    identified.difference(truth).count() as f64 / benign as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u32,
    pub accuracy: f64,
    pub void: bool,
    pub surviving_groups: usize,
    pub dropped: BTreeSet<ClientId>,
    pub flagged: Vec<(GroupId, FlagReason)>,
    pub identified: BTreeSet<ClientId>,
    /// Clients an attack targeted this round.
    pub true_malicious: BTreeSet<ClientId>,
    /// Over every round so far: a client identified once counts as identified.
    pub cumulative_tpr: f64,
    pub cumulative_fpr: f64,
    pub bytes: BTreeMap<MessageKind, Traffic>,
    pub leaked_coordinates: Option<usize>,
}

/// Running TPR/FPR over rounds.
#[derive(Clone, Debug, Default)]
pub struct Cumulative {
    pub identified: BTreeSet<ClientId>,
    pub truth: BTreeSet<ClientId>,
}

impl Cumulative {
    pub fn update(&mut self, identified: &BTreeSet<ClientId>, truth: &BTreeSet<ClientId>) {
        self.identified.extend(identified);
        self.truth.extend(truth);
    }

    pub fn tpr(&self) -> f64 {
        tpr(&self.identified, &self.truth)
    }

    pub fn fpr(&self, clients: usize) -> f64 {
        fpr(&self.identified, &self.truth, clients)
    }
}

/// Kinds that carry per-round traffic; setup traffic lives in the summary.
pub const ROUND_KINDS: [MessageKind; 5] = [
    MessageKind::SealedRandom,
    MessageKind::DropoutNotice,
    MessageKind::Submission,
    MessageKind::GlobalModel,
    MessageKind::Verdict,
];

pub const CSV_HEADER: [&str; 16] = [
    "round",
    "accuracy",
    "void",
    "surviving_groups",
    "dropped",
    "flagged",
    "identified",
    "true_malicious",
    "cumulative_tpr",
    "cumulative_fpr",
    "bytes_sealed_random",
    "bytes_dropout_notice",
    "bytes_submission",
    "bytes_global_model",
    "bytes_verdict",
    "leaked_coordinates",
];

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    round: u32,
    accuracy: f64,
    void: bool,
    surviving_groups: usize,
    dropped: String,
    flagged: String,
    identified: String,
    true_malicious: String,
    cumulative_tpr: f64,
    cumulative_fpr: f64,
    bytes_sealed_random: u64,
    bytes_dropout_notice: u64,
    bytes_submission: u64,
    bytes_global_model: u64,
    bytes_verdict: u64,
    leaked_coordinates: Option<usize>,
}

fn join_ids(ids: &BTreeSet<ClientId>) -> String {
    ids.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

fn split_ids(s: &str) -> Result<BTreeSet<ClientId>> {
    s.split(';')
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| Error::Malformed(format!("bad client id {p:?}")))
        })
        .collect()
}

impl From<&RoundMetrics> for CsvRow {
    fn from(m: &RoundMetrics) -> Self {
        let b = |k: MessageKind| m.bytes.get(&k).map_or(0, |t| t.bytes);
        CsvRow {
            round: m.round,
            accuracy: m.accuracy,
            void: m.void,
            surviving_groups: m.surviving_groups,
            dropped: join_ids(&m.dropped),
            flagged: m
                .flagged
                .iter()
                .map(|(g, r)| format!("{g}:{}", r.name()))
                .collect::<Vec<_>>()
                .join(";"),
            identified: join_ids(&m.identified),
            true_malicious: join_ids(&m.true_malicious),
            cumulative_tpr: m.cumulative_tpr,
            cumulative_fpr: m.cumulative_fpr,
            bytes_sealed_random: b(MessageKind::SealedRandom),
            bytes_dropout_notice: b(MessageKind::DropoutNotice),
            bytes_submission: b(MessageKind::Submission),
            bytes_global_model: b(MessageKind::GlobalModel),
            bytes_verdict: b(MessageKind::Verdict),
            leaked_coordinates: m.leaked_coordinates,
        }
    }
}

/// Writes the header even when there are no rows.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[RoundMetrics]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for m in rows {
        w.serialize(CsvRow::from(m))?;
    }
    w.flush()?;
    Ok(())
}

/// The CSV view of one row, as read back by consumers.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub round: u32,
    pub accuracy: f64,
    pub void: bool,
    pub surviving_groups: usize,
    pub dropped: BTreeSet<ClientId>,
    pub flagged: Vec<(GroupId, String)>,
    pub identified: BTreeSet<ClientId>,
    pub true_malicious: BTreeSet<ClientId>,
    pub cumulative_tpr: f64,
    pub cumulative_fpr: f64,
    pub bytes_submission: u64,
}

/// Parses a metrics file, checking the header exactly.
pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Malformed(format!(
            "unexpected metrics header {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize::<CsvRow>() {
        let row = rec?;
        let flagged = row
            .flagged
            .split(';')
            .filter(|p| !p.is_empty())
            .map(|p| {
                let (g, reason) = p
                    .split_once(':')
                    .ok_or_else(|| Error::Malformed(format!("bad flag {p:?}")))?;
                let g = g
                    .parse()
                    .map_err(|_| Error::Malformed(format!("bad group {g:?}")))?;
                Ok((g, reason.to_owned()))
            })
            .collect::<Result<_>>()?;
        rows.push(MetricsRow {
            round: row.round,
            accuracy: row.accuracy,
            void: row.void,
            surviving_groups: row.surviving_groups,
            dropped: split_ids(&row.dropped)?,
            flagged,
            identified: split_ids(&row.identified)?,
            true_malicious: split_ids(&row.true_malicious)?,
            cumulative_tpr: row.cumulative_tpr,
            cumulative_fpr: row.cumulative_fpr,
            bytes_submission: row.bytes_submission,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[ClientId]) -> BTreeSet<ClientId> {
        v.iter().copied().collect()
    }

    #[test]
    fn rates_follow_the_definitions() {
        assert_eq!(tpr(&ids(&[]), &ids(&[])), 1.0);
        assert_eq!(tpr(&ids(&[0, 5]), &ids(&[0, 1])), 0.5);
        // Two false positives among seven benign clients.
        assert_eq!(fpr(&ids(&[0, 1, 2, 3]), &ids(&[0, 1]), 9), 2.0 / 7.0);
        assert_eq!(fpr(&ids(&[0]), &ids(&[0]), 1), 0.0);
    }

    #[test]
    fn cumulative_counts_any_round() {
        let mut c = Cumulative::default();
        c.update(&ids(&[]), &ids(&[3]));
        assert_eq!(c.tpr(), 0.0);
        c.update(&ids(&[3]), &ids(&[]));
        assert_eq!(c.tpr(), 1.0);
        assert_eq!(c.fpr(16), 0.0);
    }

    #[test]
    fn csv_round_trip_and_empty_header() {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap().trim_end(),
            CSV_HEADER.join(",")
        );
        assert!(read_metrics_csv(&buf[..]).unwrap().is_empty());

        let m = RoundMetrics {
            round: 6,
            accuracy: 0.5,
            void: false,
            surviving_groups: 5,
            dropped: ids(&[9]),
            flagged: vec![(0, FlagReason::OutOfRange), (4, FlagReason::OutOfRange)],
            identified: ids(&[0]),
            true_malicious: ids(&[0]),
            cumulative_tpr: 1.0,
            cumulative_fpr: 0.0,
            bytes: [(
                MessageKind::Submission,
                Traffic {
                    frames: 16,
                    bytes: 1000,
                },
            )]
            .into(),
            leaked_coordinates: None,
        };
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[m]).unwrap();
        let rows = read_metrics_csv(&buf[..]).unwrap();
        assert_eq!(
            rows[0].flagged,
            [
                (0, "out-of-range".to_owned()),
                (4, "out-of-range".to_owned())
            ]
        );
        assert_eq!(rows[0].dropped, ids(&[9]));
        assert_eq!(rows[0].bytes_submission, 1000);
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(read_metrics_csv(&b"round,acc\n1,0.5\n"[..]).is_err());
    }
}
