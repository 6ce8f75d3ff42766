//! Line-oriented scenario files.
//!
//! Directives, one per line, `#` starts a comment:
//!
//! ```text
//! node <id> role=<consumer|router|producer> balance=<u> deposit=<u>
//! link <a> <b> latency=<t> bw=<n> loss=<p>
//! price <node> <a>-<b> price=<u> window=<t0>:<t1>
//! content <producer> prefix=<name> price=<u>
//! demand <consumer> prefix=<name> rate=<r> model=<delay|throughput> probes=<n>
//!        [alpha=<f>] [beta=<f>]
//! channel <a> <b> dep_a=<u> dep_b=<u>
//! fault equivocate <node> <a>-<b> price=<u> window=<t0>:<t1> at=<t>
//! run [ticks=<t>] [seed=<s>] [window=<t>] [pit_ttl=<t>] [gamma=<f>]
//!     [eps0=<f>] [tau=<f>] [threshold=<t>]
//! ```
//!
//! Node ids are `[A-Za-z0-9_]+` (a hyphen would be ambiguous in the
//! `<a>-<b>` face syntax). `<a>-<b>` names the link between two nodes; the
//! owning node's face on that link is resolved at build time.

use std::fmt;

use pptp::name::Name;
use pptp::types::{Tokens, Window};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: dangling reference: {msg}")]
    DanglingReference { line: usize, msg: String },
    #[error("line {line}: duplicate directive: {msg}")]
    DuplicateDirective { line: usize, msg: String },
}

impl ScenarioError {
    fn syntax(line: usize, msg: impl Into<String>) -> Self {
        ScenarioError::Syntax {
            line,
            msg: msg.into(),
        }
    }

    fn dangling(line: usize, msg: impl Into<String>) -> Self {
        ScenarioError::DanglingReference {
            line,
            msg: msg.into(),
        }
    }

    fn duplicate(line: usize, msg: impl Into<String>) -> Self {
        ScenarioError::DuplicateDirective {
            line,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Consumer,
    Router,
    Producer,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Consumer => "consumer",
            Role::Router => "router",
            Role::Producer => "producer",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct NodeDecl {
    pub id: String,
    pub role: Role,
    pub balance: Tokens,
    pub deposit: Tokens,
}

#[derive(Debug, Clone)]
pub struct LinkDecl {
    pub a: String,
    pub b: String,
    pub latency: u64,
    pub bandwidth: u32,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct PriceDecl {
    pub node: String,
    pub link: (String, String),
    pub price: Tokens,
    pub window: Window,
}

#[derive(Debug, Clone)]
pub struct ContentDecl {
    pub producer: String,
    pub prefix: Name,
    pub price: Tokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Delay,
    Throughput,
}

#[derive(Debug, Clone)]
pub struct DemandDecl {
    pub consumer: String,
    pub prefix: Name,
    pub rate: f64,
    pub model: ModelChoice,
    pub probes: u32,
    pub alpha: f64,
    pub beta: f64,
    /// Stop issuing content Interests after this tick; lets a run drain
    /// before settlement. Default: the whole run.
    pub until: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ChannelDecl {
    pub a: String,
    pub b: String,
    pub dep_a: Tokens,
    pub dep_b: Tokens,
}

#[derive(Debug, Clone)]
pub struct FaultDecl {
    pub node: String,
    pub link: (String, String),
    pub price: Tokens,
    pub window: Window,
    pub at: u64,
}

/// Optional run parameters from the `run` directive; command-line flags
/// override them.
#[derive(Debug, Clone, Default)]
pub struct RunDecl {
    pub ticks: Option<u64>,
    pub seed: Option<u64>,
    pub report_window: Option<u64>,
    pub pit_ttl: Option<u64>,
    pub gamma: Option<f64>,
    pub eps0: Option<f64>,
    pub tau: Option<f64>,
    pub threshold: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct Scenario {
    pub nodes: Vec<NodeDecl>,
    pub links: Vec<LinkDecl>,
    pub prices: Vec<PriceDecl>,
    pub contents: Vec<ContentDecl>,
    pub demands: Vec<DemandDecl>,
    pub channels: Vec<ChannelDecl>,
    pub faults: Vec<FaultDecl>,
    pub run: RunDecl,
}

impl Scenario {
    pub fn node(&self, id: &str) -> Option<&NodeDecl> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn has_link(&self, a: &str, b: &str) -> bool {
        self.links
            .iter()
            .any(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Directive<'a> {
    line: usize,
    keyword: &'a str,
    positional: Vec<&'a str>,
    keyed: Vec<(&'a str, &'a str)>,
}

fn split_line(line_no: usize, text: &str) -> Result<Option<Directive<'_>>, ScenarioError> {
    let text = match text.find('#') {
        Some(pos) => &text[..pos],
        None => text,
    };
    let mut tokens = text.split_whitespace();
    let Some(keyword) = tokens.next() else {
        return Ok(None);
    };
    let mut positional = Vec::new();
    let mut keyed = Vec::new();
    for token in tokens {
        match token.split_once('=') {
            Some((k, v)) => {
                if k.is_empty() || v.is_empty() {
                    return Err(ScenarioError::syntax(
                        line_no,
                        format!("bad token `{token}`"),
                    ));
                }
                keyed.push((k, v));
            }
            None => {
                if !keyed.is_empty() {
                    return Err(ScenarioError::syntax(
                        line_no,
                        format!("positional token `{token}` after key=value pairs"),
                    ));
                }
                positional.push(token);
            }
        }
    }
    Ok(Some(Directive {
        line: line_no,
        keyword,
        positional,
        keyed,
    }))
}

impl<'a> Directive<'a> {
    fn get(&self, key: &str) -> Option<&'a str> {
        self.keyed.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn require(&self, key: &str) -> Result<&'a str, ScenarioError> {
        self.get(key)
            .ok_or_else(|| ScenarioError::syntax(self.line, format!("missing `{key}=`")))
    }

    fn known_keys(&self, allowed: &[&str]) -> Result<(), ScenarioError> {
        for (k, _) in &self.keyed {
            if !allowed.contains(k) {
                return Err(ScenarioError::syntax(
                    self.line,
                    format!("unknown key `{k}=`"),
                ));
            }
        }
        Ok(())
    }

    fn u64_of(&self, key: &str) -> Result<u64, ScenarioError> {
        self.require(key)?
            .parse()
            .map_err(|_| ScenarioError::syntax(self.line, format!("`{key}=` wants an integer")))
    }

    fn f64_of(&self, key: &str) -> Result<f64, ScenarioError> {
        self.require(key)?
            .parse()
            .map_err(|_| ScenarioError::syntax(self.line, format!("`{key}=` wants a number")))
    }

    fn tokens_of(&self, key: &str) -> Result<Tokens, ScenarioError> {
        Ok(Tokens::new(self.u64_of(key)?))
    }

    fn window_of(&self, key: &str) -> Result<Window, ScenarioError> {
        let text = self.require(key)?;
        let (lo, hi) = text.split_once(':').ok_or_else(|| {
            ScenarioError::syntax(self.line, format!("`{key}=` wants `<t0>:<t1>`"))
        })?;
        let lo: u64 = lo.parse().map_err(|_| {
            ScenarioError::syntax(self.line, format!("bad window start in `{text}`"))
        })?;
        let hi: u64 = hi
            .parse()
            .map_err(|_| ScenarioError::syntax(self.line, format!("bad window end in `{text}`")))?;
        Window::try_new(lo, hi).ok_or_else(|| {
            ScenarioError::syntax(self.line, format!("window `{text}` out of order"))
        })
    }

    fn name_of(&self, key: &str) -> Result<Name, ScenarioError> {
        Name::parse(self.require(key)?)
            .map_err(|e| ScenarioError::syntax(self.line, format!("bad `{key}=`: {e}")))
    }

    fn link_ref(&self, text: &str) -> Result<(String, String), ScenarioError> {
        let (a, b) = text.split_once('-').ok_or_else(|| {
            ScenarioError::syntax(self.line, format!("`{text}` is not of the form <a>-<b>"))
        })?;
        if !valid_id(a) || !valid_id(b) {
            return Err(ScenarioError::syntax(
                self.line,
                format!("bad link reference `{text}`"),
            ));
        }
        Ok((a.to_string(), b.to_string()))
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut scenario = Scenario::default();
    let mut run_seen = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let Some(d) = split_line(line_no, raw)? else {
            continue;
        };
        match d.keyword {
            "node" => {
                d.known_keys(&["role", "balance", "deposit"])?;
                let [id] = d.positional[..] else {
                    return Err(ScenarioError::syntax(line_no, "node wants `node <id> ...`"));
                };
                if !valid_id(id) {
                    return Err(ScenarioError::syntax(
                        line_no,
                        format!("node id `{id}` (allowed: [A-Za-z0-9_])"),
                    ));
                }
                if scenario.node(id).is_some() {
                    return Err(ScenarioError::duplicate(line_no, format!("node `{id}`")));
                }
                let role = match d.require("role")? {
                    "consumer" => Role::Consumer,
                    "router" => Role::Router,
                    "producer" => Role::Producer,
                    other => return Err(ScenarioError::syntax(line_no, format!("role `{other}`"))),
                };
                scenario.nodes.push(NodeDecl {
                    id: id.to_string(),
                    role,
                    balance: d.tokens_of("balance")?,
                    deposit: d.tokens_of("deposit")?,
                });
            }
            "link" => {
                d.known_keys(&["latency", "bw", "loss"])?;
                let [a, b] = d.positional[..] else {
                    return Err(ScenarioError::syntax(
                        line_no,
                        "link wants `link <a> <b> ...`",
                    ));
                };
                for end in [a, b] {
                    if scenario.node(end).is_none() {
                        return Err(ScenarioError::dangling(line_no, format!("node `{end}`")));
                    }
                }
                if a == b {
                    return Err(ScenarioError::syntax(line_no, "link endpoints must differ"));
                }
                if scenario.has_link(a, b) {
                    return Err(ScenarioError::duplicate(
                        line_no,
                        format!("link `{a}`-`{b}`"),
                    ));
                }
                let latency = d.u64_of("latency")?;
                if latency == 0 {
                    return Err(ScenarioError::syntax(line_no, "latency must be >= 1 tick"));
                }
                let bandwidth = d.u64_of("bw")?;
                if bandwidth == 0 || bandwidth > u32::MAX as u64 {
                    return Err(ScenarioError::syntax(line_no, "bw must be in [1, 2^32)"));
                }
                let loss = d.f64_of("loss")?;
                if !(0.0..1.0).contains(&loss) {
                    return Err(ScenarioError::syntax(line_no, "loss must be in [0, 1)"));
                }
                scenario.links.push(LinkDecl {
                    a: a.to_string(),
                    b: b.to_string(),
                    latency,
                    bandwidth: bandwidth as u32,
                    loss,
                });
            }
            "price" => {
                d.known_keys(&["price", "window"])?;
                let [node, link_text] = d.positional[..] else {
                    return Err(ScenarioError::syntax(
                        line_no,
                        "price wants `price <node> <a>-<b> ...`",
                    ));
                };
                let decl = scenario
                    .node(node)
                    .ok_or_else(|| ScenarioError::dangling(line_no, format!("node `{node}`")))?;
                if decl.role != Role::Router {
                    return Err(ScenarioError::syntax(
                        line_no,
                        format!("`{node}` is not a router"),
                    ));
                }
                let link = d.link_ref(link_text)?;
                if !scenario.has_link(&link.0, &link.1) {
                    return Err(ScenarioError::dangling(
                        line_no,
                        format!("link `{link_text}`"),
                    ));
                }
                if node != link.0 && node != link.1 {
                    return Err(ScenarioError::dangling(
                        line_no,
                        format!("`{node}` is not an endpoint of `{link_text}`"),
                    ));
                }
                scenario.prices.push(PriceDecl {
                    node: node.to_string(),
                    link,
                    price: d.tokens_of("price")?,
                    window: d.window_of("window")?,
                });
            }
            "content" => {
                d.known_keys(&["prefix", "price"])?;
                let [producer] = d.positional[..] else {
                    return Err(ScenarioError::syntax(
                        line_no,
                        "content wants `content <producer> ...`",
                    ));
                };
                let decl = scenario.node(producer).ok_or_else(|| {
                    ScenarioError::dangling(line_no, format!("node `{producer}`"))
                })?;
                if decl.role != Role::Producer {
                    return Err(ScenarioError::syntax(
                        line_no,
                        format!("`{producer}` is not a producer"),
                    ));
                }
                let prefix = d.name_of("prefix")?;
                if scenario
                    .contents
                    .iter()
                    .any(|c| c.producer == producer && c.prefix == prefix)
                {
                    return Err(ScenarioError::duplicate(
                        line_no,
                        format!("content `{prefix}` at `{producer}`"),
                    ));
                }
                scenario.contents.push(ContentDecl {
                    producer: producer.to_string(),
                    prefix,
                    price: d.tokens_of("price")?,
                });
            }
            "demand" => {
                d.known_keys(&[
                    "prefix", "rate", "model", "probes", "alpha", "beta", "until",
                ])?;
                let [consumer] = d.positional[..] else {
                    return Err(ScenarioError::syntax(
                        line_no,
                        "demand wants `demand <consumer> ...`",
                    ));
                };
                let decl = scenario.node(consumer).ok_or_else(|| {
                    ScenarioError::dangling(line_no, format!("node `{consumer}`"))
                })?;
                if decl.role != Role::Consumer {
                    return Err(ScenarioError::syntax(
                        line_no,
                        format!("`{consumer}` is not a consumer"),
                    ));
                }
                let prefix = d.name_of("prefix")?;
                if !scenario
                    .contents
                    .iter()
                    .any(|c| c.prefix.is_prefix_of(&prefix))
                {
                    return Err(ScenarioError::dangling(
                        line_no,
                        format!("no producer owns a prefix of `{prefix}`"),
                    ));
                }
                let rate = d.f64_of("rate")?;
                if !(rate > 0.0) {
                    return Err(ScenarioError::syntax(line_no, "rate must be positive"));
                }
                let model = match d.require("model")? {
                    "delay" => ModelChoice::Delay,
                    "throughput" => ModelChoice::Throughput,
                    other => {
                        return Err(ScenarioError::syntax(line_no, format!("model `{other}`")))
                    }
                };
                let probes = d.u64_of("probes")?;
                if probes == 0 || probes > 64 {
                    return Err(ScenarioError::syntax(line_no, "probes must be in [1, 64]"));
                }
                let alpha = match d.get("alpha") {
                    Some(_) => d.f64_of("alpha")?,
                    None => 1.0,
                };
                let beta = match d.get("beta") {
                    Some(_) => d.f64_of("beta")?,
                    None => 100.0,
                };
                if model == ModelChoice::Delay && alpha <= 0.0 && beta <= 0.0 {
                    return Err(ScenarioError::syntax(
                        line_no,
                        "delay model needs alpha or beta positive",
                    ));
                }
                let until = match d.get("until") {
                    Some(_) => Some(d.u64_of("until")?),
                    None => None,
                };
                scenario.demands.push(DemandDecl {
                    consumer: consumer.to_string(),
                    prefix,
                    rate,
                    model,
                    probes: probes as u32,
                    alpha,
                    beta,
                    until,
                });
            }
            "channel" => {
                d.known_keys(&["dep_a", "dep_b"])?;
                let [a, b] = d.positional[..] else {
                    return Err(ScenarioError::syntax(
                        line_no,
                        "channel wants `channel <a> <b> ...`",
                    ));
                };
                for end in [a, b] {
                    if scenario.node(end).is_none() {
                        return Err(ScenarioError::dangling(line_no, format!("node `{end}`")));
                    }
                }
                if a == b {
                    return Err(ScenarioError::syntax(
                        line_no,
                        "channel parties must differ",
                    ));
                }
                if scenario.channels.iter().any(|c| c.a == a && c.b == b) {
                    return Err(ScenarioError::duplicate(
                        line_no,
                        format!("channel `{a}` `{b}`"),
                    ));
                }
                scenario.channels.push(ChannelDecl {
                    a: a.to_string(),
                    b: b.to_string(),
                    dep_a: d.tokens_of("dep_a")?,
                    dep_b: d.tokens_of("dep_b")?,
                });
            }
            "fault" => {
                d.known_keys(&["price", "window", "at"])?;
                let ["equivocate", node, link_text] = d.positional[..] else {
                    return Err(ScenarioError::syntax(
                        line_no,
                        "fault wants `fault equivocate <node> <a>-<b> ...`",
                    ));
                };
                let decl = scenario
                    .node(node)
                    .ok_or_else(|| ScenarioError::dangling(line_no, format!("node `{node}`")))?;
                if decl.role != Role::Router {
                    return Err(ScenarioError::syntax(
                        line_no,
                        format!("`{node}` is not a router"),
                    ));
                }
                let link = d.link_ref(link_text)?;
                if !scenario.has_link(&link.0, &link.1) {
                    return Err(ScenarioError::dangling(
                        line_no,
                        format!("link `{link_text}`"),
                    ));
                }
                if node != link.0 && node != link.1 {
                    return Err(ScenarioError::dangling(
                        line_no,
                        format!("`{node}` is not an endpoint of `{link_text}`"),
                    ));
                }
                let price = d.tokens_of("price")?;
                let window = d.window_of("window")?;
                let at = d.u64_of("at")?;
                // The injected item only proves equivocation against an
                // honest advertisement, so an overlapping, differently
                // priced honest schedule must be active at the trigger.
                let normalized = |l: &(String, String)| {
                    if l.0 < l.1 {
                        (l.0.clone(), l.1.clone())
                    } else {
                        (l.1.clone(), l.0.clone())
                    }
                };
                let has_conflicting_honest = scenario.prices.iter().any(|p| {
                    p.node == node
                        && normalized(&p.link) == normalized(&link)
                        && p.window.overlaps(&window)
                        && p.window.contains(at)
                        && p.price != price
                });
                if !has_conflicting_honest {
                    return Err(ScenarioError::dangling(
                        line_no,
                        "fault needs an overlapping honest price with a different value active at `at`"
                            .to_string(),
                    ));
                }
                scenario.faults.push(FaultDecl {
                    node: node.to_string(),
                    link,
                    price,
                    window,
                    at,
                });
            }
            "run" => {
                d.known_keys(&[
                    "ticks",
                    "seed",
                    "window",
                    "pit_ttl",
                    "gamma",
                    "eps0",
                    "tau",
                    "threshold",
                ])?;
                if !d.positional.is_empty() {
                    return Err(ScenarioError::syntax(line_no, "run takes only key=value"));
                }
                if run_seen {
                    return Err(ScenarioError::duplicate(line_no, "run".to_string()));
                }
                run_seen = true;
                let mut run = RunDecl::default();
                if d.get("ticks").is_some() {
                    run.ticks = Some(d.u64_of("ticks")?);
                }
                if d.get("seed").is_some() {
                    run.seed = Some(d.u64_of("seed")?);
                }
                if d.get("window").is_some() {
                    run.report_window = Some(d.u64_of("window")?);
                }
                if d.get("pit_ttl").is_some() {
                    run.pit_ttl = Some(d.u64_of("pit_ttl")?);
                }
                if d.get("gamma").is_some() {
                    run.gamma = Some(d.f64_of("gamma")?);
                }
                if d.get("eps0").is_some() {
                    run.eps0 = Some(d.f64_of("eps0")?);
                }
                if d.get("tau").is_some() {
                    run.tau = Some(d.f64_of("tau")?);
                }
                if d.get("threshold").is_some() {
                    run.threshold = Some(d.u64_of("threshold")?);
                }
                scenario.run = run;
            }
            other => {
                return Err(ScenarioError::syntax(
                    line_no,
                    format!("unknown directive `{other}`"),
                ));
            }
        }
    }

    if scenario.nodes.is_empty() {
        return Err(ScenarioError::syntax(0, "no node directives"));
    }
    Ok(scenario)
}
