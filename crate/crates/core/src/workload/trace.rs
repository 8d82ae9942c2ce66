//! Line-oriented trace format.
//!
//! ```text
//! M <method_id> <package> <signature>      method declaration
//! E <caller_id> <callee_id>                call edge
//! S <site> <method_id> <line>              allocation site
//! C <thread> <method_id>                   call
//! R <thread> <method_id>                   return
//! A <thread> <site> <size> <death_tick>    allocation
//! L <thread> <obj_ordinal>                 biased lock
//! ```
//!
//! `#` starts a comment line. The canonical form written by [`write_trace`]
//! is a header comment, all `M` lines, each method's `E`/`S` lines in body
//! order, then the events; parsing and re-writing it is byte-exact.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{MethodId, ProgramModel, SiteRef, Statement};
use crate::error::{Result, SimError};

pub const TRACE_HEADER: &str = "# rolp trace v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceEvent {
    Call {
        thread: u32,
        method: MethodId,
    },
    Return {
        thread: u32,
        method: MethodId,
    },
    Alloc {
        thread: u32,
        site: SiteRef,
        size: u64,
        death_tick: u64,
    },
    Lock {
        thread: u32,
        object: u64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub program: ProgramModel,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn allocation_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Alloc { .. }))
            .count()
    }

    /// Hex SHA-256 of the canonical text form.
    pub fn fingerprint(&self) -> String {
        struct HashWriter(Sha256);
        impl Write for HashWriter {
            fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
                self.0.update(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> io::Result<()> {
                Ok(())
            }
        }
        let mut w = HashWriter(Sha256::new());
        write_trace(self, &mut w).expect("hashing never fails");
        w.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Structural checks shared by the parser and in-memory traces.
    pub fn validate(&self) -> Result<()> {
        self.program.validate()?;
        let mut v = EventValidator::default();
        for (i, e) in self.events.iter().enumerate() {
            v.check(e, i + 1)?;
        }
        Ok(())
    }
}

/// Tracks per-thread call stacks, the allocation clock and object death
/// ticks while events stream by.
#[derive(Debug, Default)]
struct EventValidator {
    stacks: HashMap<u32, Vec<MethodId>>,
    clock: u64,
    deaths: Vec<u64>,
}

impl EventValidator {
    fn check(&mut self, event: &TraceEvent, line: usize) -> Result<()> {
        let err = |message: String| SimError::Parse { line, message };
        match *event {
            TraceEvent::Call { thread, method } => {
                self.stacks.entry(thread).or_default().push(method);
            }
            TraceEvent::Return { thread, method } => {
                let stack = self.stacks.entry(thread).or_default();
                if stack.last() != Some(&method) {
                    return Err(SimError::UnbalancedReturn {
                        line,
                        thread,
                        method,
                    });
                }
                stack.pop();
            }
            TraceEvent::Alloc {
                size, death_tick, ..
            } => {
                if size == 0 {
                    return Err(err("allocation size must be > 0".into()));
                }
                if death_tick < self.clock {
                    return Err(err(format!(
                        "death tick {death_tick} precedes allocation clock {}",
                        self.clock
                    )));
                }
                self.clock += size;
                self.deaths.push(death_tick);
            }
            TraceEvent::Lock { object, .. } => match self.deaths.get(object as usize) {
                None => return Err(err(format!("lock on unknown object {object}"))),
                Some(&death) if death <= self.clock => {
                    return Err(err(format!("lock on dead object {object}")))
                }
                Some(_) => {}
            },
        }
        Ok(())
    }
}

fn next_token(s: &str) -> Option<(&str, &str)> {
    let s = s.trim_start();
    if s.is_empty() {
        return None;
    }
    let end = s.find(char::is_whitespace).unwrap_or(s.len());
    Some((&s[..end], &s[end..]))
}

struct Fields<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> Fields<'a> {
    fn word(&mut self, what: &str) -> Result<&'a str> {
        let (tok, rest) = next_token(self.rest).ok_or_else(|| SimError::Parse {
            line: self.line,
            message: format!("missing {what}"),
        })?;
        self.rest = rest;
        Ok(tok)
    }

    fn num<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let line = self.line;
        let tok = self.word(what)?;
        tok.parse().map_err(|_| SimError::Parse {
            line,
            message: format!("invalid {what} {tok:?}"),
        })
    }

    fn remainder(&mut self, what: &str) -> Result<&'a str> {
        let r = self.rest.trim();
        if r.is_empty() {
            return Err(SimError::Parse {
                line: self.line,
                message: format!("missing {what}"),
            });
        }
        self.rest = "";
        Ok(r)
    }

    fn finish(&self) -> Result<()> {
        if self.rest.trim().is_empty() {
            Ok(())
        } else {
            Err(SimError::Parse {
                line: self.line,
                message: format!("unexpected trailing input {:?}", self.rest.trim()),
            })
        }
    }
}

enum BodyLine {
    Edge(MethodId, MethodId),
    Site(SiteRef, MethodId, u32),
}

pub fn parse_trace(reader: impl BufRead) -> Result<Trace> {
    let mut program = ProgramModel::new();
    let mut body = Vec::new();
    let mut events = Vec::new();
    let mut validator = EventValidator::default();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (tag, rest) = next_token(trimmed).expect("non-empty line");
        let mut f = Fields {
            rest,
            line: line_no,
        };
        let parse_err = |message: String| SimError::Parse {
            line: line_no,
            message,
        };
        match tag {
            "M" => {
                let id = f.num("method id")?;
                let package = f.word("package")?;
                let signature = f.remainder("signature")?;
                program
                    .add_method(id, package, signature)
                    .map_err(|e| parse_err(e.to_string()))?;
            }
            "E" => {
                body.push((line_no, BodyLine::Edge(f.num("caller")?, f.num("callee")?)));
                f.finish()?;
            }
            "S" => {
                body.push((
                    line_no,
                    BodyLine::Site(f.num("site")?, f.num("method id")?, f.num("line")?),
                ));
                f.finish()?;
            }
            "C" | "R" | "A" | "L" => {
                let thread = f.num("thread")?;
                let event = match tag {
                    "C" => TraceEvent::Call {
                        thread,
                        method: f.num("method id")?,
                    },
                    "R" => TraceEvent::Return {
                        thread,
                        method: f.num("method id")?,
                    },
                    "A" => TraceEvent::Alloc {
                        thread,
                        site: f.num("site")?,
                        size: f.num("size")?,
                        death_tick: f.num("death tick")?,
                    },
                    _ => TraceEvent::Lock {
                        thread,
                        object: f.num("object ordinal")?,
                    },
                };
                f.finish()?;
                validator.check(&event, line_no)?;
                events.push(event);
            }
            other => return Err(parse_err(format!("unknown record type {other:?}"))),
        }
    }

    for (line, entry) in body {
        let res = match entry {
            BodyLine::Edge(caller, callee) => program.add_call(caller, callee),
            BodyLine::Site(site, method, l) => program.add_site(site, method, l),
        };
        res.map_err(|e| SimError::Parse {
            line,
            message: e.to_string(),
        })?;
    }
    program.validate()?;
    Ok(Trace { program, events })
}

pub fn parse_trace_str(text: &str) -> Result<Trace> {
    parse_trace(text.as_bytes())
}

pub fn write_trace(trace: &Trace, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for m in trace.program.methods() {
        writeln!(w, "M {} {} {}", m.id, m.package, m.signature)?;
    }
    for m in trace.program.methods() {
        for st in &m.body {
            match *st {
                Statement::Call(callee) => writeln!(w, "E {} {}", m.id, callee)?,
                Statement::Alloc(site) => {
                    let decl = trace.program.site(site).expect("declared site");
                    writeln!(w, "S {} {} {}", site, m.id, decl.line)?
                }
            }
        }
    }
    for e in &trace.events {
        match *e {
            TraceEvent::Call { thread, method } => writeln!(w, "C {thread} {method}")?,
            TraceEvent::Return { thread, method } => writeln!(w, "R {thread} {method}")?,
            TraceEvent::Alloc {
                thread,
                site,
                size,
                death_tick,
            } => writeln!(w, "A {thread} {site} {size} {death_tick}")?,
            TraceEvent::Lock { thread, object } => writeln!(w, "L {thread} {object}")?,
        }
    }
    Ok(())
}

pub fn write_trace_string(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("trace text is utf-8")
}
