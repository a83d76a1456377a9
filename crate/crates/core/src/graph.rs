//! Program model: functions, basic blocks, direct call sites and planted
//! target labels, plus the JSON graph file format.
//!
//! A [`ProgramGraph`] is immutable once built. Ids in the file may be sparse;
//! loading densifies them (functions and targets by ascending file id, blocks
//! by ascending file id within their function) so that every id is a plain
//! index afterwards. Indirect call edges from the file are kept apart in
//! [`ProgramGraph::ground_truth`] and are never visible through
//! [`ProgramGraph::call_edges`].

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ids::{BlockId, Distance, EdgeId, FunctionId, TargetId};

/// On-disk program description. Unknown fields are rejected.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProgram {
    pub functions: Vec<RawFunction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub indirect_edges: Vec<RawIndirectEdge>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFunction {
    pub id: u32,
    pub name: String,
    pub entry: u32,
    pub blocks: Vec<RawBlock>,
    #[serde(default)]
    pub targets: Vec<RawTarget>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBlock {
    pub id: u32,
    #[serde(default)]
    pub succ: Vec<u32>,
    #[serde(default)]
    pub calls: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTarget {
    pub id: u32,
    pub block: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawIndirectEdge {
    pub from_fn: u32,
    pub from_block: u32,
    pub to_fn: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: BlockId,
    pub owner: FunctionId,
    pub successors: Vec<BlockId>,
    /// Direct callees, in call-site order.
    pub callees: Vec<FunctionId>,
}

impl BasicBlock {
    /// A block with two or more successors ends in a branch.
    #[inline]
    pub fn is_conditional(&self) -> bool {
        self.successors.len() >= 2
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub id: FunctionId,
    pub name: String,
    pub entry: BlockId,
    first_block: u32,
    n_blocks: u32,
    pub targets: Vec<TargetId>,
}

impl Function {
    pub fn block_ids(&self) -> impl ExactSizeIterator<Item = BlockId> + Clone {
        (self.first_block..self.first_block + self.n_blocks).map(BlockId)
    }

    #[inline]
    pub fn owns(&self, block: BlockId) -> bool {
        (self.first_block..self.first_block + self.n_blocks).contains(&block.0)
    }

    #[inline]
    pub fn n_blocks(&self) -> usize {
        self.n_blocks as usize
    }

    /// Offset of `block` inside this function's block range.
    #[inline]
    pub fn local(&self, block: BlockId) -> usize {
        (block.0 - self.first_block) as usize
    }

    #[inline]
    pub fn has_targets(&self) -> bool {
        !self.targets.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Target {
    pub id: TargetId,
    pub function: FunctionId,
    pub block: BlockId,
}

/// A call that static analysis cannot see.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct IndirectEdge {
    pub from_fn: FunctionId,
    pub from_block: BlockId,
    pub to_fn: FunctionId,
}

#[derive(Clone, Debug)]
pub struct ProgramGraph {
    functions: Vec<Function>,
    blocks: Vec<BasicBlock>,
    targets: Vec<Target>,
    call_edges: BTreeSet<(FunctionId, FunctionId)>,
    ground_truth: Vec<IndirectEdge>,
    /// Per block: index of its first outgoing edge. One extra trailing entry.
    edge_offsets: Vec<u32>,
    content_hash: [u8; 32],
}

impl PartialEq for ProgramGraph {
    fn eq(&self, other: &Self) -> bool {
        self.content_hash == other.content_hash && self.to_raw() == other.to_raw()
    }
}

impl Eq for ProgramGraph {}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

impl ProgramGraph {
    /// Validate and densify a raw program description.
    pub fn from_raw(raw: &RawProgram) -> Result<Self> {
        let mut order: Vec<usize> = (0..raw.functions.len()).collect();
        order.sort_by_key(|&i| raw.functions[i].id);

        let mut fn_index: HashMap<u32, FunctionId> = HashMap::with_capacity(order.len());
        for (dense, &i) in order.iter().enumerate() {
            let id = raw.functions[i].id;
            if fn_index.insert(id, FunctionId(dense as u32)).is_some() {
                return Err(invalid(format!("duplicate function id {id}")));
            }
        }

        // Raw block id -> (owner, dense block id).
        let mut block_index: HashMap<u32, (FunctionId, BlockId)> = HashMap::new();
        let mut next_block = 0u32;
        let mut sorted_blocks: Vec<Vec<&RawBlock>> = Vec::with_capacity(order.len());
        for (dense, &i) in order.iter().enumerate() {
            let rf = &raw.functions[i];
            if rf.blocks.is_empty() {
                return Err(invalid(format!("function {} has no blocks", rf.id)));
            }
            let mut bs: Vec<&RawBlock> = rf.blocks.iter().collect();
            bs.sort_by_key(|b| b.id);
            for b in &bs {
                if block_index
                    .insert(b.id, (FunctionId(dense as u32), BlockId(next_block)))
                    .is_some()
                {
                    return Err(invalid(format!("duplicate block id {}", b.id)));
                }
                next_block += 1;
            }
            sorted_blocks.push(bs);
        }

        let mut functions = Vec::with_capacity(order.len());
        let mut blocks = Vec::with_capacity(next_block as usize);
        let mut raw_targets: Vec<(u32, FunctionId, BlockId)> = Vec::new();
        let mut first_block = 0u32;

        for (dense, (&i, bs)) in order.iter().zip(&sorted_blocks).enumerate() {
            let rf = &raw.functions[i];
            let fid = FunctionId(dense as u32);
            let entry = match block_index.get(&rf.entry) {
                Some(&(owner, b)) if owner == fid => b,
                _ => {
                    return Err(invalid(format!(
                        "entry block {} is not a block of function {}",
                        rf.entry, rf.id
                    )))
                }
            };
            for b in bs {
                let (_, bid) = block_index[&b.id];
                let mut successors = Vec::with_capacity(b.succ.len());
                for s in &b.succ {
                    match block_index.get(s) {
                        None => {
                            return Err(invalid(format!(
                                "block {} has unknown successor {s}",
                                b.id
                            )))
                        }
                        Some(&(owner, _)) if owner != fid => {
                            return Err(invalid(format!(
                                "successor crosses function boundary: block {} -> {s}",
                                b.id
                            )))
                        }
                        Some(&(_, sid)) => {
                            if successors.contains(&sid) {
                                return Err(invalid(format!(
                                    "block {} lists successor {s} twice",
                                    b.id
                                )));
                            }
                            successors.push(sid);
                        }
                    }
                }
                let mut callees = Vec::with_capacity(b.calls.len());
                for c in &b.calls {
                    let callee = *fn_index.get(c).ok_or_else(|| {
                        invalid(format!("block {} calls unknown function {c}", b.id))
                    })?;
                    callees.push(callee);
                }
                blocks.push(BasicBlock {
                    id: bid,
                    owner: fid,
                    successors,
                    callees,
                });
            }
            for t in &rf.targets {
                match block_index.get(&t.block) {
                    None => {
                        return Err(invalid(format!(
                            "target {} references unknown block {}",
                            t.id, t.block
                        )))
                    }
                    Some(&(owner, _)) if owner != fid => {
                        return Err(invalid(format!(
                            "target/block function mismatch: target {} in function {} references block {} of another function",
                            t.id, rf.id, t.block
                        )))
                    }
                    Some(&(_, bid)) => raw_targets.push((t.id, fid, bid)),
                }
            }
            functions.push(Function {
                id: fid,
                name: rf.name.clone(),
                entry,
                first_block,
                n_blocks: bs.len() as u32,
                targets: Vec::new(),
            });
            first_block += bs.len() as u32;
        }

        raw_targets.sort_by_key(|t| t.0);
        let mut targets = Vec::with_capacity(raw_targets.len());
        for (dense, w) in raw_targets.iter().enumerate() {
            if dense > 0 && raw_targets[dense - 1].0 == w.0 {
                return Err(invalid(format!("duplicate target id {}", w.0)));
            }
            let id = TargetId(dense as u32);
            functions[w.1.index()].targets.push(id);
            targets.push(Target {
                id,
                function: w.1,
                block: w.2,
            });
        }

        let call_edges: BTreeSet<(FunctionId, FunctionId)> = blocks
            .iter()
            .flat_map(|b| b.callees.iter().map(move |&c| (b.owner, c)))
            .collect();

        let mut ground_truth = Vec::with_capacity(raw.indirect_edges.len());
        for e in &raw.indirect_edges {
            let from_fn = *fn_index
                .get(&e.from_fn)
                .ok_or_else(|| invalid(format!("indirect edge from unknown function {}", e.from_fn)))?;
            let to_fn = *fn_index
                .get(&e.to_fn)
                .ok_or_else(|| invalid(format!("indirect edge to unknown function {}", e.to_fn)))?;
            let from_block = match block_index.get(&e.from_block) {
                Some(&(owner, b)) if owner == from_fn => b,
                _ => {
                    return Err(invalid(format!(
                        "indirect edge block/function mismatch: block {} is not in function {}",
                        e.from_block, e.from_fn
                    )))
                }
            };
            if call_edges.contains(&(from_fn, to_fn)) {
                return Err(invalid(format!(
                    "indirect edge {} -> {} duplicates a direct call edge",
                    e.from_fn, e.to_fn
                )));
            }
            ground_truth.push(IndirectEdge {
                from_fn,
                from_block,
                to_fn,
            });
        }
        ground_truth.sort();
        ground_truth.dedup();

        let mut edge_offsets = Vec::with_capacity(blocks.len() + 1);
        let mut acc = 0u32;
        for b in &blocks {
            edge_offsets.push(acc);
            acc += b.successors.len() as u32;
        }
        edge_offsets.push(acc);

        let mut graph = ProgramGraph {
            functions,
            blocks,
            targets,
            call_edges,
            ground_truth,
            edge_offsets,
            content_hash: [0; 32],
        };
        let canonical = serde_json::to_vec(&graph.to_raw()).expect("graph serializes");
        graph.content_hash = Sha256::digest(&canonical).into();
        Ok(graph)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawProgram = serde_json::from_str(text).map_err(Error::from_json)?;
        Self::from_raw(&raw)
    }

    /// Canonical (dense-id) form of the graph.
    pub fn to_raw(&self) -> RawProgram {
        let functions = self
            .functions
            .iter()
            .map(|f| RawFunction {
                id: f.id.0,
                name: f.name.clone(),
                entry: f.entry.0,
                blocks: f
                    .block_ids()
                    .map(|b| {
                        let bb = self.block(b);
                        RawBlock {
                            id: b.0,
                            succ: bb.successors.iter().map(|s| s.0).collect(),
                            calls: bb.callees.iter().map(|c| c.0).collect(),
                        }
                    })
                    .collect(),
                targets: f
                    .targets
                    .iter()
                    .map(|&t| RawTarget {
                        id: t.0,
                        block: self.targets[t.index()].block.0,
                    })
                    .collect(),
            })
            .collect();
        let indirect_edges = self
            .ground_truth
            .iter()
            .map(|e| RawIndirectEdge {
                from_fn: e.from_fn.0,
                from_block: e.from_block.0,
                to_fn: e.to_fn.0,
            })
            .collect();
        RawProgram {
            functions,
            indirect_edges,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("graph serializes")
    }

    pub fn functions(&self) -> &[Function] {
        &self.functions
    }

    pub fn n_functions(&self) -> usize {
        self.functions.len()
    }

    pub fn function(&self, id: FunctionId) -> Result<&Function> {
        self.functions
            .get(id.index())
            .ok_or(Error::UnknownFunction(id))
    }

    pub fn function_by_name(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// The program entry: function 0, if the graph is non-empty.
    pub fn entry_function(&self) -> Option<FunctionId> {
        (!self.functions.is_empty()).then_some(FunctionId(0))
    }

    pub fn blocks(&self) -> &[BasicBlock] {
        &self.blocks
    }

    /// Panics on an out-of-range id; ids handed out by this graph are always valid.
    #[inline]
    pub fn block(&self, id: BlockId) -> &BasicBlock {
        &self.blocks[id.index()]
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    pub fn target(&self, id: TargetId) -> Result<&Target> {
        self.targets.get(id.index()).ok_or(Error::UnknownTarget(id))
    }

    /// Direct `(caller, callee)` pairs.
    pub fn call_edges(&self) -> &BTreeSet<(FunctionId, FunctionId)> {
        &self.call_edges
    }

    /// Indirect call edges hidden from static analysis.
    pub fn ground_truth(&self) -> &[IndirectEdge] {
        &self.ground_truth
    }

    pub fn n_edges(&self) -> usize {
        *self.edge_offsets.last().unwrap_or(&0) as usize
    }

    #[inline]
    pub fn edge_id(&self, from: BlockId, succ_index: usize) -> EdgeId {
        EdgeId(self.edge_offsets[from.index()] + succ_index as u32)
    }

    /// Source and destination blocks of a CFG edge.
    pub fn edge(&self, id: EdgeId) -> (BlockId, BlockId) {
        let from = self.edge_offsets.partition_point(|&o| o <= id.0) - 1;
        let local = (id.0 - self.edge_offsets[from]) as usize;
        (BlockId(from as u32), self.blocks[from].successors[local])
    }

    pub fn content_hash(&self) -> [u8; 32] {
        self.content_hash
    }

    pub fn content_hash_hex(&self) -> String {
        hex::encode(self.content_hash)
    }

    /// Blocks not reachable from their function's entry.
    pub fn unreachable_blocks(&self) -> Vec<BlockId> {
        let mut out = Vec::new();
        for f in &self.functions {
            let dist = self.dbb_from_unchecked(f, f.entry).0;
            out.extend(
                f.block_ids()
                    .filter(|&b| !dist[f.local(b)].is_finite()),
            );
        }
        out
    }

    /// Minimum number of conditional edges on any path from `from` to `to`
    /// within `function`.
    pub fn dbb(&self, function: FunctionId, from: BlockId, to: BlockId) -> Result<Distance> {
        let f = self.function(function)?;
        for b in [from, to] {
            if !f.owns(b) {
                return Err(Error::UnknownBlock(b));
            }
        }
        if from == to {
            return Ok(Distance::ZERO);
        }
        Ok(self.dbb_from_unchecked(f, from).0[f.local(to)])
    }

    /// `dbb(from, b)` for every block `b` of the function, indexed by local offset.
    pub fn dbb_from(&self, function: FunctionId, from: BlockId) -> Result<Vec<Distance>> {
        let f = self.function(function)?;
        if !f.owns(from) {
            return Err(Error::UnknownBlock(from));
        }
        Ok(self.dbb_from_unchecked(f, from).0)
    }

    /// 0/1 BFS over the function's CFG. Returns distances and the predecessor
    /// of each block on one shortest path, both indexed by local offset.
    pub fn dbb_tree(&self, f: &Function, from: BlockId) -> (Vec<Distance>, Vec<Option<BlockId>>) {
        self.dbb_from_unchecked(f, from)
    }

    fn dbb_from_unchecked(
        &self,
        f: &Function,
        from: BlockId,
    ) -> (Vec<Distance>, Vec<Option<BlockId>>) {
        let n = f.n_blocks();
        let mut dist = vec![Distance::Infinite; n];
        let mut pred = vec![None; n];
        let mut done = vec![false; n];
        let mut deque = VecDeque::new();
        dist[f.local(from)] = Distance::ZERO;
        deque.push_back(from);
        while let Some(b) = deque.pop_front() {
            let lb = f.local(b);
            if done[lb] {
                continue;
            }
            done[lb] = true;
            let d = dist[lb].finite().expect("queued blocks have finite distance");
            let bb = self.block(b);
            let cost = u64::from(bb.is_conditional());
            let mut succ = bb.successors.clone();
            succ.sort_unstable();
            for s in succ {
                let ls = f.local(s);
                let nd = Distance::Finite(d + cost);
                if nd < dist[ls] {
                    dist[ls] = nd;
                    pred[ls] = Some(b);
                    if cost == 0 {
                        deque.push_front(s);
                    } else {
                        deque.push_back(s);
                    }
                }
            }
        }
        (dist, pred)
    }

    /// Functions reachable from `from` over direct call edges.
    pub fn static_reachable(&self, from: FunctionId) -> Vec<bool> {
        let mut adj: Vec<Vec<FunctionId>> = vec![Vec::new(); self.functions.len()];
        for &(a, b) in &self.call_edges {
            adj[a.index()].push(b);
        }
        reach(&adj, from)
    }

    /// Functions reachable from `from` over direct and indirect call edges.
    pub fn ground_truth_reachable(&self, from: FunctionId) -> Vec<bool> {
        let mut adj: Vec<Vec<FunctionId>> = vec![Vec::new(); self.functions.len()];
        for &(a, b) in &self.call_edges {
            adj[a.index()].push(b);
        }
        for e in &self.ground_truth {
            adj[e.from_fn.index()].push(e.to_fn);
        }
        reach(&adj, from)
    }

    /// Number of targets per function, keyed by function.
    pub fn target_counts(&self) -> BTreeMap<FunctionId, usize> {
        self.functions
            .iter()
            .filter(|f| f.has_targets())
            .map(|f| (f.id, f.targets.len()))
            .collect()
    }
}

fn reach(adj: &[Vec<FunctionId>], from: FunctionId) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    if from.index() >= adj.len() {
        return seen;
    }
    let mut stack = vec![from];
    seen[from.index()] = true;
    while let Some(f) = stack.pop() {
        for &g in &adj[f.index()] {
            if !seen[g.index()] {
                seen[g.index()] = true;
                stack.push(g);
            }
        }
    }
    seen
}

pub fn load_program(path: impl AsRef<Path>) -> Result<ProgramGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ProgramGraph::from_json(&text)
}

pub fn save_program(graph: &ProgramGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, graph.to_json() + "\n").map_err(|e| Error::io(path, e))
}
