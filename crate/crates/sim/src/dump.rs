//! Channel and scenario dumps for cross-checking against external oracles.

use std::path::Path;

use serde::{Deserialize, Serialize};
use starnoma_core::channel::ChannelState;
use starnoma_core::C64;

use crate::error::SimResult;
use crate::tables;

/// One complex channel entry.
///
/// `kind` is `direct` (`from` = AP, `to` = UE, column 0), `ap_ris`
/// (`from` = AP, `to` = panel, entry `(row, col)` of the `N_b x M_l` matrix)
/// or `ris_ue` (`from` = panel, `to` = UE, column 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub kind: String,
    pub from: usize,
    pub to: usize,
    pub row: usize,
    pub col: usize,
    pub re: f64,
    pub im: f64,
}

pub const CHANNEL_HEADER: [&str; 7] = ["kind", "from", "to", "row", "col", "re", "im"];

pub fn channel_rows(ch: &ChannelState) -> Vec<ChannelRow> {
    let mut rows = Vec::new();
    let mut push = |kind: &str, from: usize, to: usize, row: usize, col: usize, z: C64| {
        rows.push(ChannelRow { kind: kind.into(), from, to, row, col, re: z.re, im: z.im });
    };
    for (b, per_ue) in ch.h_direct.iter().enumerate() {
        for (u, h) in per_ue.iter().enumerate() {
            for (i, z) in h.iter().enumerate() {
                push("direct", b, u, i, 0, *z);
            }
        }
    }
    for (b, per_panel) in ch.g_ap_ris.iter().enumerate() {
        for (l, g) in per_panel.iter().enumerate() {
            for c in 0..g.ncols() {
                for r in 0..g.nrows() {
                    push("ap_ris", b, l, r, c, g[(r, c)]);
                }
            }
        }
    }
    for (l, per_ue) in ch.g_ris_ue.iter().enumerate() {
        for (u, g) in per_ue.iter().enumerate() {
            for (i, z) in g.iter().enumerate() {
                push("ris_ue", l, u, i, 0, *z);
            }
        }
    }
    rows
}

pub fn write_channels(path: &Path, ch: &ChannelState) -> SimResult<()> {
    tables::write_table(path, &channel_rows(ch), &CHANNEL_HEADER)
}
