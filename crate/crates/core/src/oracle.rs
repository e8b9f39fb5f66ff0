//! Reference checker.
//!
//! Enumerates every successor of every reachable state, one attribute at a
//! time, straight from the transition rules. It shares no evaluation or
//! successor code with [`crate::engine`] and refuses models whose state
//! space exceeds a cap.

use std::collections::HashMap;

use crate::engine::{CompiledModel, Trace, Verdict};
use crate::model::{AttributeKind, CmpOp, Label, ModelSpec, State, TriggerExpr, Value};

pub const DEFAULT_CAP: u128 = 1 << 24;

#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Largest state space (product of domain sizes, squared for the
    /// product machine) the oracle agrees to explore.
    pub cap: u128,
    pub attacker_enabled: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { cap: DEFAULT_CAP, attacker_enabled: true }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub verdict: Verdict,
    pub states: usize,
}

fn compare(op: CmpOp, lhs: &Value, rhs: &Value) -> bool {
    use std::cmp::Ordering::*;
    let ord = match (lhs, rhs) {
        (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
        _ => None,
    };
    match (op, ord) {
        (CmpOp::Eq, _) => lhs == rhs,
        (CmpOp::Ne, _) => lhs != rhs,
        (CmpOp::Lt, Some(o)) => o == Less,
        (CmpOp::Le, Some(o)) => o != Greater,
        (CmpOp::Gt, Some(o)) => o == Greater,
        (CmpOp::Ge, Some(o)) => o != Less,
        (_, None) => false,
    }
}

/// Rule id, trigger, and assignments as (attribute, value index).
type TableRule = (String, Expr, Vec<(usize, u32)>);

/// Value tables and truth tables for one model.
struct Tables {
    names: Vec<String>,
    values: Vec<Vec<Value>>,
    rules: Vec<TableRule>,
    forbidden: Vec<Expr>,
    choices: Vec<Option<Vec<u32>>>,
    public: Vec<usize>,
    private: Vec<usize>,
    initial: Vec<u32>,
}

enum Expr {
    Lit(usize, Vec<bool>),
    All(Vec<Expr>),
    Any(Vec<Expr>),
    Neg(Box<Expr>),
}

impl Expr {
    fn holds(&self, s: &[u32]) -> bool {
        match self {
            Expr::Lit(a, t) => t[s[*a] as usize],
            Expr::All(xs) => xs.iter().all(|x| x.holds(s)),
            Expr::Any(xs) => xs.iter().any(|x| x.holds(s)),
            Expr::Neg(x) => !x.holds(s),
        }
    }
}

impl Tables {
    fn new(model: &ModelSpec, attacker: bool) -> Tables {
        let names: Vec<String> = model.attributes.iter().map(|a| a.name.clone()).collect();
        let values: Vec<Vec<Value>> = model.attributes.iter().map(|a| a.domain.values()).collect();
        let pos = |n: &str| names.iter().position(|x| x == n).expect("declared attribute");
        fn build(e: &TriggerExpr, pos: &dyn Fn(&str) -> usize, values: &[Vec<Value>]) -> Expr {
            match e {
                TriggerExpr::Atom(a) => {
                    let i = pos(&a.attr);
                    Expr::Lit(i, values[i].iter().map(|v| compare(a.op, v, &a.value)).collect())
                }
                TriggerExpr::And(xs) => Expr::All(xs.iter().map(|x| build(x, pos, values)).collect()),
                TriggerExpr::Or(xs) => Expr::Any(xs.iter().map(|x| build(x, pos, values)).collect()),
                TriggerExpr::Not(x) => Expr::Neg(Box::new(build(x, pos, values))),
            }
        }
        let mut rules: Vec<(usize, &crate::model::Rule)> = model.rules.iter().enumerate().collect();
        rules.sort_by_key(|(i, r)| (r.priority, *i));
        let rules = rules
            .into_iter()
            .map(|(_, r)| {
                let act = r
                    .action
                    .iter()
                    .map(|(a, v)| {
                        let i = pos(a);
                        (i, values[i].iter().position(|x| x == v).expect("validated") as u32)
                    })
                    .collect();
                (r.id.clone(), build(&r.trigger, &pos, &values), act)
            })
            .collect();
        let forbidden = model.escalation_policies().map(|p| build(p, &pos, &values)).collect();
        let choices = model
            .attributes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if a.vulnerable && attacker {
                    Some((0..values[i].len() as u32).collect())
                } else if a.kind == AttributeKind::Sensor {
                    Some(
                        (0..values[i].len() as u32)
                            .filter(|&k| a.window.as_ref().is_none_or(|w| w.contains(&values[i][k as usize])))
                            .collect(),
                    )
                } else {
                    None
                }
            })
            .collect();
        let with = |l: Label| -> Vec<usize> {
            model.attributes.iter().enumerate().filter(|(_, a)| a.label == l).map(|(i, _)| i).collect()
        };
        let initial = model
            .attributes
            .iter()
            .enumerate()
            .map(|(i, a)| values[i].iter().position(|v| *v == a.initial).expect("validated") as u32)
            .collect();
        Tables {
            public: with(Label::Public),
            private: with(Label::Private),
            names,
            values,
            rules,
            forbidden,
            choices,
            initial,
        }
    }

    fn space(&self) -> u128 {
        self.values.iter().fold(1u128, |acc, v| acc.saturating_mul(v.len() as u128))
    }

    fn bad(&self, s: &[u32]) -> bool {
        self.forbidden.iter().any(|f| f.holds(s))
    }

    /// Per attribute, the values it may take in a successor of `s`.
    fn options(&self, s: &[u32]) -> Vec<Vec<u32>> {
        (0..s.len())
            .map(|i| {
                if let Some(c) = &self.choices[i] {
                    return c.clone();
                }
                for (_, trig, act) in &self.rules {
                    if trig.holds(s) {
                        if let Some(&(_, v)) = act.iter().find(|(a, _)| *a == i) {
                            return vec![v];
                        }
                    }
                }
                vec![s[i]]
            })
            .collect()
    }

    fn is_successor(&self, s: &[u32], t: &[u32]) -> bool {
        self.options(s).iter().zip(t).all(|(o, v)| o.contains(v))
    }

    fn to_state(&self, s: &[u32]) -> State {
        State(s.iter().enumerate().map(|(i, &k)| self.values[i][k as usize].clone()).collect())
    }

    fn encode(&self, s: &State) -> Option<Vec<u32>> {
        s.0.iter().enumerate().map(|(i, v)| self.values.get(i)?.iter().position(|x| x == v).map(|k| k as u32)).collect()
    }
}

fn product(opts: &[Vec<u32>], mut f: impl FnMut(&[u32]) -> bool) -> bool {
    if opts.iter().any(|o| o.is_empty()) {
        return false;
    }
    let mut cur: Vec<u32> = opts.iter().map(|o| o[0]).collect();
    let mut idx = vec![0usize; opts.len()];
    loop {
        if f(&cur) {
            return true;
        }
        let mut k = opts.len();
        loop {
            if k == 0 {
                return false;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < opts[k].len() {
                cur[k] = opts[k][idx[k]];
                break;
            }
            idx[k] = 0;
            cur[k] = opts[k][0];
        }
    }
}

fn refuse(why: &str) -> OracleResult {
    OracleResult { verdict: Verdict::Unknown(why.to_string()), states: 0 }
}

/// Breadth-first search over explicit states. `succ` feeds successors to
/// its callback until the callback asks it to stop.
fn bfs(
    roots: Vec<Vec<u32>>,
    bad: impl Fn(&[u32]) -> bool,
    succ: impl Fn(&[u32], &mut dyn FnMut(&[u32]) -> bool) -> bool,
    cap: u128,
) -> Found {
    let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut seen: Vec<(Vec<u32>, Option<usize>)> = Vec::new();
    let path = |seen: &Vec<(Vec<u32>, Option<usize>)>, mut i: usize| {
        let mut out = vec![seen[i].0.clone()];
        while let Some(p) = seen[i].1 {
            out.push(seen[p].0.clone());
            i = p;
        }
        out.reverse();
        out
    };
    for r in roots {
        if index.contains_key(&r) {
            continue;
        }
        index.insert(r.clone(), seen.len());
        seen.push((r, None));
        if bad(&seen.last().unwrap().0) {
            return Found::Path(path(&seen, seen.len() - 1), seen.len());
        }
    }
    let mut head = 0;
    while head < seen.len() {
        let s = seen[head].0.clone();
        let mut hit = None;
        let mut over = false;
        succ(&s, &mut |t: &[u32]| {
            if index.contains_key(t) {
                return false;
            }
            if seen.len() as u128 >= cap {
                over = true;
                return true;
            }
            index.insert(t.to_vec(), seen.len());
            seen.push((t.to_vec(), Some(head)));
            if bad(t) {
                hit = Some(seen.len() - 1);
                return true;
            }
            false
        });
        if let Some(i) = hit {
            return Found::Path(path(&seen, i), seen.len());
        }
        if over {
            return Found::Over(seen.len());
        }
        head += 1;
    }
    Found::Clean(seen.len())
}

enum Found {
    Path(Vec<Vec<u32>>, usize),
    Clean(usize),
    Over(usize),
}

/// Exhaustive escalation check over the unreduced model.
pub fn brute_check_escalation(model: &ModelSpec, cfg: &OracleConfig) -> OracleResult {
    let t = Tables::new(model, cfg.attacker_enabled);
    if t.space() > cfg.cap {
        return refuse("state-space-cap");
    }
    if t.forbidden.is_empty() {
        return OracleResult { verdict: Verdict::Secure, states: 0 };
    }
    let found = bfs(vec![t.initial.clone()], |s| t.bad(s), |s, emit| product(&t.options(s), emit), cfg.cap);
    finish(model, cfg, &t, found, 1)
}

/// Exhaustive privacy check over explicit pairs of states.
pub fn brute_check_privacy(model: &ModelSpec, cfg: &OracleConfig) -> OracleResult {
    let t = Tables::new(model, cfg.attacker_enabled);
    if t.private.is_empty() || t.public.is_empty() {
        return refuse("labels");
    }
    if t.space().saturating_mul(t.space()) > cfg.cap {
        return refuse("state-space-cap");
    }
    let n = t.names.len();
    // right copies: initial state with every private combination
    let private_opts: Vec<Vec<u32>> = (0..n)
        .map(|i| if t.private.contains(&i) { (0..t.values[i].len() as u32).collect() } else { vec![t.initial[i]] })
        .collect();
    let mut roots = Vec::new();
    product(&private_opts, |r| {
        let mut pair = t.initial.clone();
        pair.extend_from_slice(r);
        roots.push(pair);
        false
    });
    let found = bfs(
        roots,
        |p| t.public.iter().any(|&i| p[i] != p[n + i]),
        |p, emit| {
            let (l, r) = p.split_at(n);
            let (ol, or) = (t.options(l), t.options(r));
            // free attributes move together; rule-driven ones per copy
            let shared: Vec<usize> = (0..n).filter(|&i| t.choices[i].is_some()).collect();
            let mut opts: Vec<Vec<u32>> = ol;
            for (i, o) in or.into_iter().enumerate() {
                opts.push(if t.choices[i].is_some() { vec![0] } else { o });
            }
            product(&opts, |x| {
                let mut y = x.to_vec();
                for &i in &shared {
                    y[n + i] = y[i];
                }
                emit(&y)
            })
        },
        cfg.cap,
    );
    finish(model, cfg, &t, found, 2)
}

fn finish(model: &ModelSpec, cfg: &OracleConfig, t: &Tables, found: Found, lanes: usize) -> OracleResult {
    match found {
        Found::Over(states) => OracleResult { verdict: Verdict::Unknown("state-cap".into()), states },
        Found::Clean(states) => OracleResult { verdict: Verdict::Secure, states },
        Found::Path(path, states) => {
            let n = t.names.len();
            let cm = CompiledModel::new(model);
            let pairs: Vec<(Vec<u16>, Option<Vec<u16>>)> = path
                .iter()
                .map(|p| {
                    let conv = |xs: &[u32]| xs.iter().map(|&x| x as u16).collect::<Vec<u16>>();
                    if lanes == 2 {
                        (conv(&p[..n]), Some(conv(&p[n..])))
                    } else {
                        (conv(p), None)
                    }
                })
                .collect();
            OracleResult { verdict: Verdict::Attack(Trace::from_states(&cm, cfg.attacker_enabled, &pairs)), states }
        }
    }
}

/// Checks that an escalation trace starts in the initial state, follows the
/// transition relation and ends in a forbidden state.
pub fn replay_escalation(model: &ModelSpec, trace: &Trace, attacker: bool) -> Result<(), String> {
    let t = Tables::new(model, attacker);
    let states: Vec<Vec<u32>> = trace
        .steps
        .iter()
        .map(|s| t.encode(&s.state).ok_or_else(|| "state outside the model".to_string()))
        .collect::<Result<_, _>>()?;
    if states.first() != Some(&t.initial) {
        return Err("trace does not start in the initial state".into());
    }
    for (i, w) in states.windows(2).enumerate() {
        if !t.is_successor(&w[0], &w[1]) {
            return Err(format!("step {} is not a successor of step {i}", i + 1));
        }
    }
    if !t.bad(states.last().unwrap()) {
        return Err("final state does not violate the policy".into());
    }
    Ok(())
}

/// Checks a paired trace against the product machine: the copies agree on
/// non-private data initially, free attributes move together, and the final
/// states differ on a public attribute.
pub fn replay_privacy(model: &ModelSpec, trace: &Trace, attacker: bool) -> Result<(), String> {
    let t = Tables::new(model, attacker);
    let mut pairs = Vec::new();
    for s in &trace.steps {
        let r = s.right.as_ref().ok_or("trace is not paired")?;
        let l = t.encode(&s.state).ok_or("state outside the model")?;
        let r = t.encode(r).ok_or("state outside the model")?;
        pairs.push((l, r));
    }
    let (l0, r0) = pairs.first().ok_or("empty trace")?;
    if *l0 != t.initial {
        return Err("trace does not start in the initial state".into());
    }
    if (0..t.names.len()).any(|i| !t.private.contains(&i) && l0[i] != r0[i]) {
        return Err("initial copies differ outside private attributes".into());
    }
    for (i, w) in pairs.windows(2).enumerate() {
        let ((pl, pr), (nl, nr)) = (&w[0], &w[1]);
        if !t.is_successor(pl, nl) || !t.is_successor(pr, nr) {
            return Err(format!("step {} is not a successor of step {i}", i + 1));
        }
        if (0..t.names.len()).any(|a| t.choices[a].is_some() && nl[a] != nr[a]) {
            return Err(format!("step {}: free choices differ between copies", i + 1));
        }
    }
    let (l, r) = pairs.last().unwrap();
    if !t.public.iter().any(|&i| l[i] != r[i]) {
        return Err("final states agree on every public attribute".into());
    }
    Ok(())
}

/// Explicit successor sets, for tests.
pub fn successors(model: &ModelSpec, s: &State, attacker: bool) -> Vec<State> {
    let t = Tables::new(model, attacker);
    let s = t.encode(s).expect("state in model");
    let mut out = Vec::new();
    product(&t.options(&s), |x| {
        out.push(t.to_state(x));
        false
    });
    out
}

pub fn is_successor(model: &ModelSpec, s: &State, next: &State, attacker: bool) -> bool {
    let t = Tables::new(model, attacker);
    match (t.encode(s), t.encode(next)) {
        (Some(a), Some(b)) => t.is_successor(&a, &b),
        _ => false,
    }
}
