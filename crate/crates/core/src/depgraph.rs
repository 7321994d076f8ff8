//! State dependency graphs and chained decomposition plans.

use std::collections::BTreeMap;
use std::fmt;

use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};

/// Directed graph with an edge `(i, j)` when the derivative of state `i`
/// reads state `j`. Self-reads are not edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    labels: Vec<String>,
    edges: Vec<(usize, usize)>,
    adjacent: Vec<Vec<bool>>,
}

pub fn build_graph(model: &DynamicsModel) -> DependencyGraph {
    let n = model.n();
    let mut edges = Vec::new();
    let mut adjacent = vec![vec![false; n]; n];
    for (i, deps) in model.deps().iter().enumerate() {
        for &j in deps.iter().filter(|&&j| j != i) {
            edges.push((i, j));
            adjacent[i][j] = true;
            adjacent[j][i] = true;
        }
    }
    DependencyGraph { labels: model.labels().to_vec(), edges, adjacent }
}

impl DependencyGraph {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// True when an edge joins `i` and `j` in either direction.
    pub fn linked(&self, i: usize, j: usize) -> bool {
        self.adjacent[i][j]
    }

    /// States read by `i` (excluding itself).
    pub fn reads(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == i).map(|e| e.1)
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Plan(format!("unknown state '{label}'")))
    }
}

/// Subsystems together with their missing states and providers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionPlan {
    subsystems: Vec<Vec<usize>>,
    p: usize,
    missing: Vec<Vec<usize>>,
    providers: Vec<BTreeMap<usize, Vec<usize>>>,
}

impl DecompositionPlan {
    /// Builds a plan from subsystem index sets. Each set is sorted; `p`
    /// defaults to the largest subsystem.
    pub fn new(graph: &DependencyGraph, subsystems: Vec<Vec<usize>>, p: Option<usize>) -> Result<Self> {
        let n = graph.n();
        let mut subs = Vec::with_capacity(subsystems.len());
        for mut s in subsystems {
            s.sort_unstable();
            if s.is_empty() {
                return Err(Error::Plan("empty subsystem".into()));
            }
            if let Some(&bad) = s.iter().find(|&&i| i >= n) {
                return Err(Error::Plan(format!("state index {bad} out of range")));
            }
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Plan("state listed twice in one subsystem".into()));
            }
            subs.push(s);
        }
        if subs.is_empty() {
            return Err(Error::Plan("no subsystems".into()));
        }
        let p = p.unwrap_or_else(|| subs.iter().map(Vec::len).max().unwrap_or(0));
        let missing: Vec<Vec<usize>> = subs
            .iter()
            .map(|s| {
                let mut m: Vec<usize> = s
                    .iter()
                    .flat_map(|&i| graph.reads(i))
                    .filter(|j| s.binary_search(j).is_err())
                    .collect();
                m.sort_unstable();
                m.dedup();
                m
            })
            .collect();
        let providers = subs
            .iter()
            .zip(&missing)
            .map(|(s, miss)| {
                miss.iter()
                    .map(|&j| {
                        let ks = subs
                            .iter()
                            .enumerate()
                            .filter(|(_, o)| o.binary_search(&j).is_ok() && intersects(s, o))
                            .map(|(k, _)| k)
                            .collect();
                        (j, ks)
                    })
                    .collect()
            })
            .collect();
        Ok(DecompositionPlan { subsystems: subs, p, missing, providers })
    }

    /// The single subsystem holding every state.
    pub fn whole(graph: &DependencyGraph) -> DecompositionPlan {
        DecompositionPlan::new(graph, vec![(0..graph.n()).collect()], None).expect("nonempty graph")
    }

    /// Parses `z1,z2|z2,z3|z3,z4`.
    pub fn parse(graph: &DependencyGraph, text: &str, p: Option<usize>) -> Result<Self> {
        let subs = text
            .split('|')
            .map(|part| {
                part.split(',')
                    .map(|l| graph.index(l.trim()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        DecompositionPlan::new(graph, subs, p)
    }

    pub fn format(&self, graph: &DependencyGraph) -> String {
        self.subsystems
            .iter()
            .map(|s| s.iter().map(|&i| graph.labels[i].as_str()).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn subsystems(&self) -> &[Vec<usize>] {
        &self.subsystems
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Missing states of subsystem `i`, ascending.
    pub fn missing(&self, i: usize) -> &[usize] {
        &self.missing[i]
    }

    /// Subsystems that can bound missing state `j` of subsystem `i`.
    pub fn providers(&self, i: usize, j: usize) -> &[usize] {
        self.providers[i].get(&j).map_or(&[], Vec::as_slice)
    }
}

fn intersects(a: &[usize], b: &[usize]) -> bool {
    a.iter().any(|x| b.binary_search(x).is_ok())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TooLarge { subsystem: usize, size: usize, p: usize },
    Uncoupled { subsystem: usize, state: usize },
    NotChained { groups: Vec<Vec<usize>> },
    Uncovered { states: Vec<usize> },
    NoProvider { subsystem: usize, state: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one = |i: &usize| format!("S{}", i + 1);
        match self {
            Violation::TooLarge { subsystem, size, p } => {
                write!(f, "{} has {size} states, budget is {p}", one(subsystem))
            }
            Violation::Uncoupled { subsystem, state } => {
                write!(f, "{}: state #{state} has no edge to another member", one(subsystem))
            }
            Violation::NotChained { groups } => {
                let g: Vec<String> = groups
                    .iter()
                    .map(|g| g.iter().map(one).collect::<Vec<_>>().join(","))
                    .collect();
                write!(f, "subsystems fall into disjoint groups {{{}}}", g.join("} {"))
            }
            Violation::Uncovered { states } => write!(f, "states {states:?} belong to no subsystem"),
            Violation::NoProvider { subsystem, state } => {
                write!(f, "{}: missing state #{state} has no chained provider", one(subsystem))
            }
        }
    }
}

/// Checks every decomposition rule and reports all violations.
pub fn validate_plan(plan: &DecompositionPlan, graph: &DependencyGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let subs = &plan.subsystems;
    let m = subs.len();
    for (i, s) in subs.iter().enumerate() {
        if s.len() > plan.p {
            out.push(Violation::TooLarge { subsystem: i, size: s.len(), p: plan.p });
        }
        if s.len() > 1 || m > 1 {
            for &a in s {
                if !s.iter().any(|&b| b != a && graph.linked(a, b)) {
                    out.push(Violation::Uncoupled { subsystem: i, state: a });
                }
            }
        }
    }
    // connected components of the subsystem intersection graph
    let mut group = vec![usize::MAX; m];
    let mut groups = Vec::new();
    for start in 0..m {
        if group[start] != usize::MAX {
            continue;
        }
        let g = groups.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        group[start] = g;
        while let Some(a) = stack.pop() {
            members.push(a);
            for b in 0..m {
                if group[b] == usize::MAX && intersects(&subs[a], &subs[b]) {
                    group[b] = g;
                    stack.push(b);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    if groups.len() > 1 {
        out.push(Violation::NotChained { groups });
    }
    let uncovered: Vec<usize> = (0..graph.n()).filter(|x| !subs.iter().any(|s| s.contains(x))).collect();
    if !uncovered.is_empty() {
        out.push(Violation::Uncovered { states: uncovered });
    }
    for i in 0..m {
        for &j in &plan.missing[i] {
            if plan.providers(i, j).is_empty() {
                out.push(Violation::NoProvider { subsystem: i, state: j });
            }
        }
    }
    out
}

/// `(space, time)` exponents of `k`.
///
/// Space is the largest subsystem. A subsystem with missing states pays one
/// extra factor of `k` for the per-point range lookup along provider axes.
pub fn predict_complexity(plan: &DecompositionPlan) -> (usize, usize) {
    let space = plan.subsystems.iter().map(Vec::len).max().unwrap_or(0);
    let time = plan
        .subsystems
        .iter()
        .enumerate()
        .map(|(i, s)| s.len() + usize::from(!plan.missing[i].is_empty()))
        .max()
        .unwrap_or(0);
    (space, time)
}

/// Outcome of [`suggest_plans`].
#[derive(Debug, Clone)]
pub struct Suggestions {
    pub plans: Vec<DecompositionPlan>,
    /// Why the list is empty or incomplete, if it is.
    pub note: Option<String>,
}

const MAX_STATES: usize = 12;
const SEARCH_BUDGET: usize = 5_000_000;

/// Enumerates valid plans under budget `p`, best first.
///
/// Candidate subsystems are connected vertex sets of size at most `p` in
/// which every member touches another member. Plans are combinations of
/// candidates with no subsystem contained in another. Ranking: fewer
/// subsystems, then lower time exponent, then lower space exponent, then
/// lexicographic on the index sets.
pub fn suggest_plans(graph: &DependencyGraph, p: usize) -> Result<Suggestions> {
    let n = graph.n();
    if p < 1 {
        return Err(Error::Plan("p must be at least 1".into()));
    }
    if n > MAX_STATES {
        return Err(Error::Plan(format!("exhaustive search is limited to {MAX_STATES} states, model has {n}")));
    }
    let mut cands: Vec<Vec<usize>> = Vec::new();
    for mask in 1u32..(1u32 << n) {
        let set: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let single_whole = set.len() == 1 && n == 1;
        if set.len() > p || (set.len() == 1 && !single_whole) {
            continue;
        }
        if set.iter().all(|&a| single_whole || set.iter().any(|&b| b != a && graph.linked(a, b))) && connected(graph, &set) {
            cands.push(set);
        }
    }
    cands.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));

    let mut plans = Vec::new();
    let mut visited = 0usize;
    let mut truncated = false;
    let mut pick = Vec::new();
    'sizes: for m in 1..=n.min(cands.len()) {
        let mut idx: Vec<usize> = (0..m).collect();
        loop {
            visited += 1;
            if visited > SEARCH_BUDGET {
                truncated = true;
                break 'sizes;
            }
            pick.clear();
            pick.extend(idx.iter().map(|&k| cands[k].clone()));
            let nested = pick.iter().enumerate().any(|(a, sa)| {
                pick.iter().enumerate().any(|(b, sb)| a != b && sa.iter().all(|x| sb.contains(x)))
            });
            if !nested {
                let plan = DecompositionPlan::new(graph, pick.clone(), Some(p))?;
                if validate_plan(&plan, graph).is_empty() {
                    plans.push(plan);
                }
            }
            if !next_combination(&mut idx, cands.len()) {
                break;
            }
        }
    }
    plans.sort_by(|a, b| rank_key(a).cmp(&rank_key(b)));
    let note = if truncated {
        Some(format!("search stopped after {SEARCH_BUDGET} combinations"))
    } else if plans.is_empty() {
        Some(if cands.is_empty() {
            "no subsystem of at most p states satisfies the coupling rule".to_string()
        } else {
            "no combination of coupled subsystems covers every state with chained providers".to_string()
        })
    } else {
        None
    };
    Ok(Suggestions { plans, note })
}

fn rank_key(p: &DecompositionPlan) -> (usize, usize, usize, Vec<Vec<usize>>) {
    let (space, time) = predict_complexity(p);
    (p.len(), time, space, p.subsystems.clone())
}

fn connected(graph: &DependencyGraph, set: &[usize]) -> bool {
    let mut seen = vec![false; set.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(a) = stack.pop() {
        for b in 0..set.len() {
            if !seen[b] && graph.linked(set[a], set[b]) {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let m = idx.len();
    for k in (0..m).rev() {
        if idx[k] < n - m + k {
            idx[k] += 1;
            for r in k + 1..m {
                idx[r] = idx[r - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{builtin, ModelParams};

    fn graph(name: &str) -> DependencyGraph {
        build_graph(&builtin(name, &ModelParams::default()).unwrap())
    }

    #[test]
    fn quad_graph_edges() {
        assert_eq!(graph("quad4").edges(), &[(0, 1), (1, 2), (2, 3)]);
        assert!(graph("decoupled").edges().is_empty());
        assert_eq!(graph("bicycle6").edges().len(), 13);
    }

    #[test]
    fn chain_plan_is_valid() {
        let g = graph("quad4");
        let plan = DecompositionPlan::parse(&g, "z1,z2|z2,z3|z3,z4", Some(2)).unwrap();
        assert!(validate_plan(&plan, &g).is_empty());
        assert_eq!(plan.missing(0), &[2]);
        assert_eq!(plan.providers(0, 2), &[1]);
        assert_eq!(plan.missing(2), &[] as &[usize]);
        assert_eq!(predict_complexity(&plan), (2, 3));
        assert_eq!(plan.format(&g), "z1,z2|z2,z3|z3,z4");
        assert_eq!(predict_complexity(&DecompositionPlan::whole(&g)), (4, 4));
    }

    #[test]
    fn disjoint_plan_is_not_chained() {
        let g = graph("quad4");
        let plan = DecompositionPlan::parse(&g, "z1,z2|z3,z4", None).unwrap();
        let v = validate_plan(&plan, &g);
        assert!(v.iter().any(|v| matches!(v, Violation::NotChained { .. })));
        assert!(v.iter().any(|v| matches!(v, Violation::NoProvider { subsystem: 0, state: 2 })));
    }

    #[test]
    fn other_violations_are_listed() {
        let g = graph("quad4");
        let plan = DecompositionPlan::parse(&g, "z1,z3|z2,z3,z4", Some(2)).unwrap();
        let v = validate_plan(&plan, &g);
        assert!(v.contains(&Violation::TooLarge { subsystem: 1, size: 3, p: 2 }));
        assert!(v.contains(&Violation::Uncoupled { subsystem: 0, state: 0 }));
        let plan = DecompositionPlan::parse(&g, "z1,z2|z2,z3", None).unwrap();
        assert!(validate_plan(&plan, &g).contains(&Violation::Uncovered { states: vec![3] }));
        assert!(DecompositionPlan::parse(&g, "z1,z9", None).is_err());
    }

    #[test]
    fn bicycle_plan_of_six() {
        let g = graph("bicycle6");
        let plan =
            DecompositionPlan::parse(&g, "X,vx,vy|Y,vx,vy|X,psi|Y,psi|vx,vy,omega|psi,omega", Some(3)).unwrap();
        assert!(validate_plan(&plan, &g).is_empty(), "{:?}", validate_plan(&plan, &g));
        assert_eq!(predict_complexity(&plan), (3, 4));
    }

    #[test]
    fn suggestions() {
        let g = graph("quad4");
        let s = suggest_plans(&g, 2).unwrap();
        assert_eq!(s.plans[0].format(&g), "z1,z2|z2,z3|z3,z4");
        let s = suggest_plans(&g, 4).unwrap();
        assert_eq!(s.plans[0].len(), 1);
        assert_eq!(predict_complexity(&s.plans[0]), (4, 4));

        let g = graph("car5");
        let s = suggest_plans(&g, 4).unwrap();
        assert_eq!(predict_complexity(&s.plans[0]), (3, 4), "{}", s.plans[0].format(&g));
        for p in &s.plans {
            assert!(validate_plan(p, &g).is_empty());
        }

        let s = suggest_plans(&graph("decoupled"), 2).unwrap();
        assert!(s.plans.is_empty());
        assert!(s.note.is_some());
    }
}
