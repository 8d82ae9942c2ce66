//! Static pruning of the instrumentation plan.
//!
//! A method call is only worth profiling if it can lead to an allocation
//! within `max_alloc_frame` frames. Distances are shortest call-graph paths
//! to any method whose body allocates, so recursion is harmless. Package
//! filters restrict both profiled methods and profiled sites.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub type MethodId = u32;
/// Trace-level allocation-site reference (the `S` line's first field).
pub type SiteRef = u32;

pub const DEFAULT_HOT_THRESHOLD: u64 = 100;
pub const DEFAULT_MAX_ALLOC_FRAME: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statement {
    Call(MethodId),
    Alloc(SiteRef),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Method {
    pub id: MethodId,
    pub package: String,
    pub signature: String,
    pub body: Vec<Statement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteDecl {
    pub source: SiteRef,
    pub method: MethodId,
    pub line: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProgramModel {
    methods: BTreeMap<MethodId, Method>,
    sites: BTreeMap<SiteRef, SiteDecl>,
}

impl ProgramModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_method(&mut self, id: MethodId, package: &str, signature: &str) -> Result<()> {
        if self.methods.contains_key(&id) {
            return Err(SimError::InvalidSpec(format!("method {id} declared twice")));
        }
        self.methods.insert(
            id,
            Method {
                id,
                package: package.to_owned(),
                signature: signature.to_owned(),
                body: Vec::new(),
            },
        );
        Ok(())
    }

    pub fn add_call(&mut self, caller: MethodId, callee: MethodId) -> Result<()> {
        self.method_mut(caller)?.body.push(Statement::Call(callee));
        Ok(())
    }

    pub fn add_site(&mut self, source: SiteRef, method: MethodId, line: u32) -> Result<()> {
        if self.sites.contains_key(&source) {
            return Err(SimError::InvalidSpec(format!(
                "site {source} declared twice"
            )));
        }
        self.method_mut(method)?.body.push(Statement::Alloc(source));
        self.sites.insert(
            source,
            SiteDecl {
                source,
                method,
                line,
            },
        );
        Ok(())
    }

    fn method_mut(&mut self, id: MethodId) -> Result<&mut Method> {
        self.methods
            .get_mut(&id)
            .ok_or(SimError::Undeclared { what: "method", id })
    }

    pub fn method(&self, id: MethodId) -> Option<&Method> {
        self.methods.get(&id)
    }

    pub fn methods(&self) -> impl Iterator<Item = &Method> {
        self.methods.values()
    }

    pub fn site(&self, source: SiteRef) -> Option<&SiteDecl> {
        self.sites.get(&source)
    }

    pub fn sites(&self) -> impl Iterator<Item = &SiteDecl> {
        self.sites.values()
    }

    pub fn method_count(&self) -> usize {
        self.methods.len()
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    /// Checks that every call edge targets a declared method.
    pub fn validate(&self) -> Result<()> {
        for m in self.methods.values() {
            for st in &m.body {
                if let Statement::Call(callee) = st {
                    if !self.methods.contains_key(callee) {
                        return Err(SimError::Undeclared {
                            what: "method",
                            id: *callee,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Methods no declared method calls.
    pub fn entry_points(&self) -> Vec<MethodId> {
        let called: BTreeSet<MethodId> = self
            .methods
            .values()
            .flat_map(|m| m.body.iter())
            .filter_map(|s| match s {
                Statement::Call(c) => Some(*c),
                Statement::Alloc(_) => None,
            })
            .collect();
        self.methods
            .keys()
            .copied()
            .filter(|m| !called.contains(m))
            .collect()
    }
}

/// Shortest distance, in frames, from every method to an allocating method.
/// `None` means no allocation is reachable.
pub fn allocation_distances(program: &ProgramModel) -> BTreeMap<MethodId, Option<u32>> {
    let mut callers: BTreeMap<MethodId, Vec<MethodId>> = BTreeMap::new();
    let mut dist: BTreeMap<MethodId, Option<u32>> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for m in program.methods() {
        let allocates = m.body.iter().any(|s| matches!(s, Statement::Alloc(_)));
        dist.insert(m.id, allocates.then_some(0));
        if allocates {
            queue.push_back(m.id);
        }
        for s in &m.body {
            if let Statement::Call(callee) = s {
                callers.entry(*callee).or_default().push(m.id);
            }
        }
    }
    while let Some(m) = queue.pop_front() {
        let d = dist[&m].expect("queued methods have a distance");
        for &caller in callers.get(&m).into_iter().flatten() {
            let slot = dist.get_mut(&caller).expect("declared");
            if slot.is_none() {
                *slot = Some(d + 1);
                queue.push_back(caller);
            }
        }
    }
    dist
}

pub fn allocation_distance(program: &ProgramModel, method: MethodId) -> Option<u32> {
    allocation_distances(program)
        .get(&method)
        .copied()
        .flatten()
}

fn package_selected(package: &str, filters: &[String]) -> bool {
    filters.is_empty()
        || filters.iter().any(|f| {
            package == f
                || (package.starts_with(f.as_str())
                    && package.as_bytes().get(f.len()) == Some(&b'.'))
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentationPlan {
    pub profiled_methods: BTreeSet<MethodId>,
    pub profiled_sites: BTreeSet<SiteRef>,
    /// Invocations a planned method needs before its calls are profiled.
    pub hot_threshold: u64,
}

impl InstrumentationPlan {
    pub fn with_hot_threshold(mut self, hot_threshold: u64) -> Self {
        self.hot_threshold = hot_threshold;
        self
    }
}

pub fn select_instrumented(
    program: &ProgramModel,
    max_alloc_frame: u32,
    packages: &[String],
) -> InstrumentationPlan {
    let dist = allocation_distances(program);
    let profiled_methods = program
        .methods()
        .filter(|m| package_selected(&m.package, packages))
        .filter(|m| matches!(dist[&m.id], Some(d) if d <= max_alloc_frame))
        .map(|m| m.id)
        .collect();
    let profiled_sites = program
        .sites()
        .filter(|s| {
            program
                .method(s.method)
                .is_some_and(|m| package_selected(&m.package, packages))
        })
        .map(|s| s.source)
        .collect();
    InstrumentationPlan {
        profiled_methods,
        profiled_sites,
        hot_threshold: DEFAULT_HOT_THRESHOLD,
    }
}

/// Profiling of a planned method starts at its `hot_threshold`-th call.
pub fn hot_gate(invocation_count: u64, hot_threshold: u64) -> bool {
    invocation_count >= hot_threshold
}
