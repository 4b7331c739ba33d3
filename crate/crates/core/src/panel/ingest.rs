//! JSONL event ingestion and reach / activity / resonance extraction.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array3;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::{default_dim_names, FeaturePanel};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Post,
    Reply,
    Repost,
    Follow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub ts: i64,
    pub actor: String,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

impl EventRecord {
    pub fn validate(&self) -> Result<()> {
        if self.actor.is_empty() {
            return Err(Error::invalid("event without actor"));
        }
        let needs_target = matches!(self.kind, EventKind::Follow | EventKind::Reply);
        if needs_target && self.target.as_deref().is_none_or(str::is_empty) {
            return Err(Error::invalid(format!("{:?} event without target", self.kind)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParsedEvents {
    pub events: Vec<EventRecord>,
    /// 1-based line numbers of records that failed to parse or validate.
    pub skipped_lines: Vec<usize>,
}

impl ParsedEvents {
    pub fn warnings(&self) -> usize {
        self.skipped_lines.len()
    }
}

/// Reads one record per line; blank lines are ignored, malformed ones skipped and counted.
pub fn parse_events(reader: impl BufRead) -> Result<ParsedEvents> {
    let mut out = ParsedEvents::default();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EventRecord>(&line) {
            Ok(ev) if ev.validate().is_ok() => out.events.push(ev),
            _ => out.skipped_lines.push(no + 1),
        }
    }
    Ok(out)
}

pub fn read_events_file(path: impl AsRef<Path>) -> Result<ParsedEvents> {
    parse_events(BufReader::new(File::open(path)?))
}

#[derive(Clone, Debug)]
pub struct IngestConfig {
    pub keywords: Vec<String>,
    /// Half-open window `[start, end)` in UTC seconds.
    pub start: i64,
    pub end: i64,
    pub step: i64,
    /// Activity and resonance accumulate from the window start instead of per step.
    pub cumulative: bool,
    /// Follower counts at the window start; overrides follows observed before it.
    pub follower_snapshot: Option<HashMap<String, u64>>,
    /// Actors whose id matches any of these are dropped.
    pub exclude: Vec<Regex>,
}

impl IngestConfig {
    pub fn new(keywords: Vec<String>, start: i64, end: i64, step: i64) -> Self {
        Self {
            keywords,
            start,
            end,
            step,
            cumulative: false,
            follower_snapshot: None,
            exclude: Vec::new(),
        }
    }

    pub fn n_steps(&self) -> Result<usize> {
        if self.end <= self.start {
            return Err(Error::invalid("window is empty"));
        }
        if self.step <= 0 || (self.end - self.start) % self.step != 0 {
            return Err(Error::invalid(format!(
                "step {} does not divide the window [{}, {})",
                self.step, self.start, self.end
            )));
        }
        Ok(((self.end - self.start) / self.step) as usize)
    }

    fn matcher(&self) -> Result<Regex> {
        let kws: Vec<String> = self
            .keywords
            .iter()
            .map(|k| k.trim())
            .filter(|k| !k.is_empty())
            .map(regex::escape)
            .collect();
        if kws.is_empty() {
            return Err(Error::invalid("at least one topic keyword is required"));
        }
        RegexBuilder::new(&kws.join("|"))
            .case_insensitive(true)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct IngestReport {
    pub panel: FeaturePanel,
    pub excluded_events: usize,
    pub topic_events: usize,
}

/// Reads follower snapshot rows `agent_id,followers` (a header row is optional).
pub fn read_follower_snapshot(path: impl AsRef<Path>) -> Result<HashMap<String, u64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut out = HashMap::new();
    for (no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let (Some(id), Some(count)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::invalid(format!("snapshot row {} needs two fields", no + 1)));
        };
        match count.trim().parse::<u64>() {
            Ok(c) => {
                out.insert(id.trim().to_string(), c);
            }
            Err(_) if no == 0 => continue,
            Err(_) => return Err(Error::invalid(format!("bad follower count `{count}`"))),
        }
    }
    Ok(out)
}

/// Builds the `N x T x 3` panel. The result does not depend on event order.
pub fn ingest_events(events: &[EventRecord], cfg: &IngestConfig) -> Result<IngestReport> {
    let t_steps = cfg.n_steps()?;
    let topic = cfg.matcher()?;
    let excluded = |id: &str| cfg.exclude.iter().any(|re| re.is_match(id));
    let bucket = |ts: i64| -> Option<usize> {
        (ts >= cfg.start && ts < cfg.end).then(|| ((ts - cfg.start) / cfg.step) as usize)
    };
    let matches = |ev: &EventRecord| ev.text.as_deref().is_some_and(|t| topic.is_match(t));

    let mut kept = Vec::with_capacity(events.len());
    let mut excluded_events = 0;
    for ev in events {
        if ev.validate().is_err() || excluded(&ev.actor) {
            excluded_events += 1;
        } else {
            kept.push(ev);
        }
    }

    let mut agents: Vec<&str> = kept
        .iter()
        .filter(|ev| bucket(ev.ts).is_some())
        .map(|ev| ev.actor.as_str())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    if agents.is_empty() {
        return Err(Error::EmptyPanel);
    }
    agents.sort_unstable();
    let index: HashMap<&str, usize> = agents.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let n = agents.len();

    // Earliest topic-matching post or repost per actor, for reply linkage.
    let mut first_topic_post: HashMap<&str, i64> = HashMap::new();
    for ev in &kept {
        if matches!(ev.kind, EventKind::Post | EventKind::Repost) && matches(ev) {
            let e = first_topic_post.entry(ev.actor.as_str()).or_insert(ev.ts);
            *e = (*e).min(ev.ts);
        }
    }

    // First time each distinct follower followed each agent.
    let mut follow_at: HashMap<(&str, &str), i64> = HashMap::new();
    for ev in kept.iter().filter(|ev| ev.kind == EventKind::Follow) {
        let target = ev.target.as_deref().unwrap_or_default();
        if index.contains_key(target) && ev.actor != target {
            let e = follow_at.entry((ev.actor.as_str(), target)).or_insert(ev.ts);
            *e = (*e).min(ev.ts);
        }
    }

    let mut pre_window = vec![0u64; n];
    let mut new_followers = vec![vec![0u64; t_steps]; n];
    for (&(_, target), &ts) in &follow_at {
        let i = index[target];
        if ts < cfg.start {
            pre_window[i] += 1;
        } else if let Some(t) = bucket(ts) {
            new_followers[i][t] += 1;
        }
    }
    if let Some(snap) = &cfg.follower_snapshot {
        for (i, id) in agents.iter().enumerate() {
            if let Some(&c) = snap.get(*id) {
                pre_window[i] = c;
            }
        }
    }

    let mut activity = vec![vec![0u64; t_steps]; n];
    let mut resonance = vec![vec![0u64; t_steps]; n];
    let mut topic_events = 0;
    for ev in &kept {
        let Some(t) = bucket(ev.ts) else { continue };
        match ev.kind {
            EventKind::Post | EventKind::Repost if matches(ev) => {
                activity[index[ev.actor.as_str()]][t] += 1;
                topic_events += 1;
            }
            EventKind::Reply => {
                let target = ev.target.as_deref().unwrap_or_default();
                let linked = first_topic_post.get(target).is_some_and(|&p| p <= ev.ts);
                if let (true, Some(&j)) = (linked && target != ev.actor, index.get(target)) {
                    resonance[j][t] += 1;
                    topic_events += 1;
                }
            }
            _ => {}
        }
    }
    if topic_events == 0 {
        return Err(Error::EmptyPanel);
    }

    let mut features = Array3::zeros((n, t_steps, 3));
    for i in 0..n {
        let mut followers = pre_window[i];
        let (mut act, mut res) = (0u64, 0u64);
        for t in 0..t_steps {
            if cfg.cumulative {
                act += activity[i][t];
                res += resonance[i][t];
            } else {
                act = activity[i][t];
                res = resonance[i][t];
            }
            features[[i, t, 0]] = (followers as f64).ln_1p();
            features[[i, t, 1]] = (act as f64).ln_1p();
            features[[i, t, 2]] = (res as f64).ln_1p();
            followers += new_followers[i][t];
        }
    }
    let ids = agents.iter().map(|s| s.to_string()).collect();
    Ok(IngestReport {
        panel: FeaturePanel::new(features, ids, default_dim_names(3))?,
        excluded_events,
        topic_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAY: i64 = 86_400;

    fn ev(ts: i64, actor: &str, kind: EventKind, text: Option<&str>, target: Option<&str>) -> EventRecord {
        EventRecord {
            ts,
            actor: actor.into(),
            kind,
            text: text.map(Into::into),
            target: target.map(Into::into),
        }
    }

    #[test]
    fn single_matching_post() {
        let events = vec![ev(10, "u", EventKind::Post, Some("Big MYTHOS news"), None)];
        let cfg = IngestConfig::new(vec!["mythos".into()], 0, 3 * DAY, DAY);
        let p = ingest_events(&events, &cfg).unwrap().panel;
        assert_eq!((p.n_agents(), p.n_steps(), p.n_dims()), (1, 3, 3));
        assert_eq!(p.step(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 2f64.ln(), 0.0]);
        assert_eq!(p.step(1).iter().copied().collect::<Vec<_>>(), vec![0.0; 3]);
    }

    #[test]
    fn reach_without_engagement() {
        let mut events: Vec<EventRecord> = (0..3)
            .map(|k| ev(-100 + k, &format!("f{k}"), EventKind::Follow, None, Some("star")))
            .collect();
        events.push(ev(5, "star", EventKind::Post, Some("unrelated"), None));
        events.push(ev(6, "other", EventKind::Post, Some("mythos"), None));
        let cfg = IngestConfig::new(vec!["mythos".into()], 0, 2 * DAY, DAY);
        let p = ingest_events(&events, &cfg).unwrap().panel;
        let i = p.agent_ids().iter().position(|a| a == "star").unwrap();
        for t in 0..2 {
            assert_eq!(p.step(t).row(i).to_vec(), vec![4f64.ln(), 0.0, 0.0]);
        }
    }

    #[test]
    fn replies_count_only_on_topic_posters() {
        let events = vec![
            ev(0, "a", EventKind::Post, Some("#Mythos"), None),
            ev(1, "b", EventKind::Reply, Some("nice"), Some("a")),
            ev(2, "a", EventKind::Reply, Some("thanks"), Some("b")),
            ev(DAY + 1, "c", EventKind::Reply, None, Some("a")),
        ];
        let cfg = IngestConfig::new(vec!["mythos".into()], 0, 2 * DAY, DAY);
        let p = ingest_events(&events, &cfg).unwrap().panel;
        assert_eq!(p.agent_ids(), &["a", "b", "c"]);
        assert_eq!(p.step(0)[[0, 2]], 2f64.ln());
        assert_eq!(p.step(1)[[0, 2]], 2f64.ln());
        assert_eq!(p.step(0)[[1, 2]], 0.0);

        let mut cum = cfg.clone();
        cum.cumulative = true;
        let p = ingest_events(&events, &cum).unwrap().panel;
        assert_eq!(p.step(1)[[0, 2]], 2f64.ln_1p());
    }

    #[test]
    fn snapshot_and_exclusion() {
        let events = vec![
            ev(-5, "x", EventKind::Follow, None, Some("a")),
            ev(0, "a", EventKind::Post, Some("mythos"), None),
            ev(1, "bot_1", EventKind::Post, Some("mythos"), None),
        ];
        let mut cfg = IngestConfig::new(vec!["mythos".into()], 0, DAY, DAY);
        cfg.exclude = vec![Regex::new("^bot_").unwrap()];
        cfg.follower_snapshot = Some(HashMap::from([("a".to_string(), 9)]));
        let rep = ingest_events(&events, &cfg).unwrap();
        assert_eq!(rep.panel.agent_ids(), &["a"]);
        assert_eq!(rep.excluded_events, 1);
        assert_eq!(rep.panel.step(0)[[0, 0]], 10f64.ln());
    }

    #[test]
    fn empty_and_invalid_windows() {
        let events = vec![ev(0, "a", EventKind::Post, Some("other"), None)];
        let cfg = IngestConfig::new(vec!["mythos".into()], 0, DAY, DAY);
        assert!(matches!(ingest_events(&events, &cfg), Err(Error::EmptyPanel)));
        assert!(matches!(ingest_events(&[], &cfg), Err(Error::EmptyPanel)));
        let bad = IngestConfig::new(vec!["mythos".into()], 0, DAY, 7);
        assert!(ingest_events(&events, &bad).is_err());
    }

    #[test]
    fn malformed_lines_are_counted() {
        let text = "\
{\"ts\":1,\"actor\":\"a\",\"kind\":\"post\",\"text\":\"hi\"}
not json
{\"ts\":2,\"actor\":\"a\",\"kind\":\"follow\"}

{\"ts\":3,\"actor\":\"b\",\"kind\":\"like\"}
{\"ts\":4,\"actor\":\"b\",\"kind\":\"reply\",\"target\":\"a\"}
";
        let parsed = parse_events(text.as_bytes()).unwrap();
        assert_eq!(parsed.events.len(), 2);
        assert_eq!(parsed.skipped_lines, vec![2, 3, 5]);
    }
}
