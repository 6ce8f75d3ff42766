//! Per-window metrics rows, the CSV surface, and the end-of-run summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use pptp::consumer::PathId;
use pptp::types::Tokens;

pub const CSV_HEADER: &str = "tick,consumer,path_id,interests_sent,data_received,mean_latency,frac_within_threshold,cost_spent,v_measured,u_measured";

/// One (consumer, path, reporting window) observation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// Last tick of the reporting window.
    pub tick: u64,
    pub consumer: String,
    pub path_id: PathId,
    pub interests_sent: u64,
    pub data_received: u64,
    pub mean_latency: Option<f64>,
    pub frac_within_threshold: Option<f64>,
    pub cost_spent: u64,
    pub v_measured: Option<f64>,
    pub u_measured: Option<f64>,
}

fn fmt_opt(value: Option<f64>) -> String {
    match value {
        None => String::new(),
        Some(v) if v == f64::NEG_INFINITY => "-inf".to_string(),
        Some(v) if v == f64::INFINITY => "inf".to_string(),
        Some(v) => format!("{v:.6}"),
    }
}

pub fn emit_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 + rows.len() * 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.tick,
            r.consumer,
            r.path_id,
            r.interests_sent,
            r.data_received,
            fmt_opt(r.mean_latency),
            fmt_opt(r.frac_within_threshold),
            r.cost_spent,
            fmt_opt(r.v_measured),
            fmt_opt(r.u_measured),
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct NodeSummary {
    pub id: String,
    pub role: String,
    pub initial_balance: Tokens,
    pub initial_deposit: Tokens,
    pub final_balance: Tokens,
    pub deposit_remaining: Tokens,
    /// Tokens intentionally kept from envelopes.
    pub revenue_kept: Tokens,
    /// Tokens that landed with dropped packets.
    pub windfall: Tokens,
    /// Consumer spend committed into first-hop channels.
    pub spent: Tokens,
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct ChannelSummary {
    pub id: u64,
    pub party_a: String,
    pub party_b: String,
    pub deposit_a: Tokens,
    pub deposit_b: Tokens,
    pub final_a: Tokens,
    pub final_b: Tokens,
    pub seq: u64,
}

#[derive(Debug, Clone)]
pub struct DisputeSummary {
    pub advertiser: String,
    pub submitter: String,
    pub verdict: String,
}

#[derive(Debug, Clone)]
pub struct Conservation {
    pub minted: Tokens,
    pub final_balances: Tokens,
    pub deposits_unburned: Tokens,
    pub escrow_remaining: Tokens,
    pub burned: Tokens,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub seed: u64,
    pub ticks: u64,
    pub nodes: Vec<NodeSummary>,
    pub channels: Vec<ChannelSummary>,
    pub disputes: Vec<DisputeSummary>,
    pub conservation: Conservation,
    pub counters: BTreeMap<String, u64>,
}

pub fn emit_summary(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "run seed={} ticks={}", s.seed, s.ticks);
    let _ = writeln!(out, "[nodes]");
    for n in &s.nodes {
        let _ = writeln!(
            out,
            "node {} role={} balance={}->{} deposit={}->{} revenue={} windfall={} spent={} flagged={}",
            n.id,
            n.role,
            n.initial_balance,
            n.final_balance,
            n.initial_deposit,
            n.deposit_remaining,
            n.revenue_kept,
            n.windfall,
            n.spent,
            if n.flagged { "yes" } else { "no" },
        );
    }
    let _ = writeln!(out, "[channels]");
    for c in &s.channels {
        let _ = writeln!(
            out,
            "channel {} {}<->{} deposits=({},{}) settled=({},{}) seq={}",
            c.id, c.party_a, c.party_b, c.deposit_a, c.deposit_b, c.final_a, c.final_b, c.seq,
        );
    }
    let _ = writeln!(out, "[disputes]");
    for d in &s.disputes {
        let _ = writeln!(
            out,
            "dispute advertiser={} submitter={} verdict={}",
            d.advertiser, d.submitter, d.verdict,
        );
    }
    let _ = writeln!(out, "[conservation]");
    let c = &s.conservation;
    let _ = writeln!(
        out,
        "minted={} balances={} deposits={} escrow={} burned={} ok={}",
        c.minted,
        c.final_balances,
        c.deposits_unburned,
        c.escrow_remaining,
        c.burned,
        if c.ok { "yes" } else { "no" },
    );
    let _ = writeln!(out, "[counters]");
    for (k, v) in &s.counters {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}
