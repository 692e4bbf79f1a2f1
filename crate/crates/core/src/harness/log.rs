//! Line-oriented event log: `time node module event key=value ...`.

use std::fmt::{self, Write as _};

use crate::engine::{Module, NodeId, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub time: SimTime,
    pub node: NodeId,
    pub module: Module,
    pub event: &'static str,
    pub fields: Vec<(&'static str, String)>,
}

impl LogRecord {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.time, self.node, self.module.as_str(), self.event)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn push(
        &mut self,
        time: SimTime,
        node: NodeId,
        module: Module,
        event: &'static str,
        fields: Vec<(&'static str, String)>,
    ) {
        self.records.push(LogRecord {
            time,
            node,
            module,
            event,
            fields,
        });
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn events<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a LogRecord> + 'a {
        self.records.iter().filter(move |r| r.event == name)
    }

    /// The whole log, one record per line.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 64);
        for r in &self.records {
            let _ = writeln!(out, "{r}");
        }
        out
    }

    /// The last `n` lines, for diagnostics.
    pub fn tail(&self, n: usize) -> String {
        let start = self.records.len().saturating_sub(n);
        let mut out = String::new();
        for r in &self.records[start..] {
            let _ = writeln!(out, "{r}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let mut log = EventLog::default();
        log.push(
            SimTime::from_secs(1.5),
            NodeId(0),
            Module::Llc,
            "promote",
            vec![("iface", "if1".into()), ("handover", "true".into())],
        );
        assert_eq!(log.render(), "1.500000000 n0 llc promote iface=if1 handover=true\n");
        assert_eq!(log.records()[0].field("iface"), Some("if1"));
        assert_eq!(log.tail(5), log.render());
    }
}
