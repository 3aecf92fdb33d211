//! OpenQASM 2.0 frontend and dependency DAG.
//!
//! Supports the gate alphabet x, h, t, tdg, s, sdg, rz, u1, u2, u3, cx, swap
//! over any number of quantum registers (flattened to one index space in
//! declaration order). Classical registers, `measure`, `barrier` and `if`
//! statements are accepted and dropped with a warning.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    X,
    H,
    T,
    Tdg,
    S,
    Sdg,
    Rz(f64),
    U1(f64),
    U2(f64, f64),
    U3(f64, f64, f64),
    Cx,
    Swap,
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::Cx | GateKind::Swap => 2,
            _ => 1,
        }
    }

    /// Name used in latency tables and dumps.
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::X => "x",
            GateKind::H => "h",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::Rz(_) => "rz",
            GateKind::U1(_) => "u1",
            GateKind::U2(_, _) => "u2",
            GateKind::U3(_, _, _) => "u3",
            GateKind::Cx => "cx",
            GateKind::Swap => "swap",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateKind::Rz(a) => write!(f, "rz({a})"),
            GateKind::U1(a) => write!(f, "u1({a})"),
            GateKind::U2(a, b) => write!(f, "u2({a},{b})"),
            GateKind::U3(a, b, c) => write!(f, "u3({a},{b},{c})"),
            k => write!(f, "{}", k.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    /// Ordered qubit indices; for cx the control comes first.
    pub qubits: Vec<usize>,
    /// Sequence number, unique within a circuit and increasing in program order.
    pub id: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Circuit {
    pub gates: Vec<Gate>,
    pub num_qubits: usize,
    /// Statements accepted but dropped during parsing.
    pub warnings: Vec<String>,
}

impl Circuit {
    pub fn from_gates(kinds: Vec<(GateKind, Vec<usize>)>, num_qubits: usize) -> Circuit {
        let gates = kinds
            .into_iter()
            .enumerate()
            .map(|(id, (kind, qubits))| Gate { kind, qubits, id })
            .collect();
        Circuit { gates, num_qubits, warnings: Vec::new() }
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn count_kind(&self, name: &str) -> usize {
        self.gates.iter().filter(|g| g.kind.name() == name).count()
    }
}

/// Dependency DAG: an edge connects two gates that share a qubit with no
/// intervening gate on that qubit.
#[derive(Debug, Clone)]
pub struct CircuitDag {
    pub edges: Vec<(usize, usize)>,
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
    /// 1-based: sources have depth 1.
    pub depth: Vec<usize>,
}

impl CircuitDag {
    pub fn num_nodes(&self) -> usize {
        self.depth.len()
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Deterministic topological order: gate ids are program order, which is
    /// already topological.
    pub fn topological_order(&self) -> impl Iterator<Item = usize> {
        0..self.depth.len()
    }
}

pub fn build_dag(circuit: &Circuit) -> CircuitDag {
    let n = circuit.gates.len();
    let mut preds = vec![Vec::new(); n];
    let mut succs = vec![Vec::new(); n];
    let mut edges = Vec::new();
    let mut last_on_qubit: HashMap<usize, usize> = HashMap::new();
    for gate in &circuit.gates {
        for &q in &gate.qubits {
            if let Some(&p) = last_on_qubit.get(&q) {
                if !succs[p].contains(&gate.id) {
                    edges.push((p, gate.id));
                    succs[p].push(gate.id);
                    preds[gate.id].push(p);
                }
            }
            last_on_qubit.insert(q, gate.id);
        }
    }
    let mut depth = vec![1usize; n];
    for id in 0..n {
        for &p in &preds[id] {
            depth[id] = depth[id].max(depth[p] + 1);
        }
    }
    CircuitDag { edges, preds, succs, depth }
}

/// JSON dump of a DAG: `{nodes:[{id,kind,qubits,depth}], edges:[[p,s]]}`.
pub fn dag_to_json(circuit: &Circuit, dag: &CircuitDag) -> serde_json::Value {
    let nodes: Vec<_> = circuit
        .gates
        .iter()
        .map(|g| {
            serde_json::json!({
                "id": g.id,
                "kind": g.kind.to_string(),
                "qubits": g.qubits,
                "depth": dag.depth[g.id],
            })
        })
        .collect();
    serde_json::json!({ "nodes": nodes, "edges": dag.edges })
}

struct Parser<'a> {
    text: &'a str,
    registers: Vec<(String, usize, usize)>, // name, offset, size
    gates: Vec<(GateKind, Vec<usize>)>,
    warnings: Vec<String>,
    num_qubits: usize,
}

pub fn parse_qasm(text: &str) -> Result<Circuit> {
    let mut parser = Parser {
        text,
        registers: Vec::new(),
        gates: Vec::new(),
        warnings: Vec::new(),
        num_qubits: 0,
    };
    parser.run()?;
    let mut circuit = Circuit::from_gates(parser.gates, parser.num_qubits);
    circuit.warnings = parser.warnings;
    Ok(circuit)
}

impl<'a> Parser<'a> {
    fn run(&mut self) -> Result<()> {
        // Statements end with `;`; line numbers are tracked for diagnostics.
        let mut line = 1usize;
        let mut stmt = String::new();
        let mut stmt_line = 1usize;
        let mut chars = self.text.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '\n' => {
                    line += 1;
                    stmt.push(' ');
                }
                '/' if chars.peek() == Some(&'/') => {
                    for c2 in chars.by_ref() {
                        if c2 == '\n' {
                            line += 1;
                            break;
                        }
                    }
                }
                ';' => {
                    self.statement(stmt.trim(), stmt_line)?;
                    stmt.clear();
                    stmt_line = line;
                }
                _ => {
                    if stmt.trim().is_empty() {
                        stmt_line = line;
                    }
                    stmt.push(c);
                }
            }
        }
        if !stmt.trim().is_empty() {
            return Err(Error::Syntax {
                line: stmt_line,
                msg: format!("unterminated statement `{}`", stmt.trim()),
            });
        }
        Ok(())
    }

    fn statement(&mut self, stmt: &str, line: usize) -> Result<()> {
        if stmt.is_empty() || stmt.starts_with("OPENQASM") || stmt.starts_with("include") {
            return Ok(());
        }
        if let Some(rest) = stmt.strip_prefix("if") {
            self.warnings.push(format!("line {line}: dropped conditional `if{rest}`"));
            return Ok(());
        }
        if stmt.starts_with("creg") {
            self.warnings.push(format!("line {line}: dropped classical register `{stmt}`"));
            return Ok(());
        }
        if stmt.starts_with("measure") {
            self.warnings.push(format!("line {line}: dropped `{stmt}`"));
            return Ok(());
        }
        if stmt.starts_with("barrier") {
            self.warnings.push(format!("line {line}: dropped `{stmt}`"));
            return Ok(());
        }
        if let Some(rest) = stmt.strip_prefix("qreg") {
            let (name, size) = parse_decl(rest.trim(), line)?;
            let offset = self.num_qubits;
            self.num_qubits += size;
            self.registers.push((name, offset, size));
            return Ok(());
        }
        self.gate_statement(stmt, line)
    }

    fn gate_statement(&mut self, stmt: &str, line: usize) -> Result<()> {
        let (head, args_str) = match stmt.find(|c: char| c.is_whitespace()) {
            Some(i) => (&stmt[..i], stmt[i..].trim()),
            None => {
                return Err(Error::Syntax { line, msg: format!("malformed statement `{stmt}`") })
            }
        };
        let (name, params) = match head.find('(') {
            Some(i) => {
                let close = head.rfind(')').ok_or_else(|| Error::Syntax {
                    line,
                    msg: format!("missing `)` in `{head}`"),
                })?;
                (&head[..i], parse_params(&head[i + 1..close], line)?)
            }
            None => (head, Vec::new()),
        };
        let kind = match (name, params.as_slice()) {
            ("x", []) => GateKind::X,
            ("h", []) => GateKind::H,
            ("t", []) => GateKind::T,
            ("tdg", []) => GateKind::Tdg,
            ("s", []) => GateKind::S,
            ("sdg", []) => GateKind::Sdg,
            ("rz", [a]) => GateKind::Rz(*a),
            ("u1", [a]) => GateKind::U1(*a),
            ("u2", [a, b]) => GateKind::U2(*a, *b),
            ("u3", [a, b, c]) => GateKind::U3(*a, *b, *c),
            ("cx", []) => GateKind::Cx,
            ("swap", []) => GateKind::Swap,
            ("x" | "h" | "t" | "tdg" | "s" | "sdg" | "rz" | "u1" | "u2" | "u3" | "cx"
            | "swap", _) => {
                return Err(Error::Syntax {
                    line,
                    msg: format!("wrong parameter count for `{name}`"),
                })
            }
            _ => return Err(Error::UnsupportedGate(name.to_string(), line)),
        };
        for p in &params {
            if !p.is_finite() {
                return Err(Error::Syntax { line, msg: format!("non-finite angle in `{stmt}`") });
            }
        }
        let qubits: Vec<usize> = args_str
            .split(',')
            .map(|a| self.resolve_qubit(a.trim(), line))
            .collect::<Result<_>>()?;
        if qubits.len() != kind.arity() {
            return Err(Error::Syntax {
                line,
                msg: format!("`{name}` expects {} qubit(s), got {}", kind.arity(), qubits.len()),
            });
        }
        if kind.arity() == 2 && qubits[0] == qubits[1] {
            return Err(Error::Syntax {
                line,
                msg: format!("`{name}` acts twice on qubit {}", qubits[0]),
            });
        }
        self.gates.push((kind, qubits));
        Ok(())
    }

    fn resolve_qubit(&self, arg: &str, line: usize) -> Result<usize> {
        let (name, idx) = parse_decl(arg, line)?;
        for (rname, offset, size) in &self.registers {
            if *rname == name {
                if idx >= *size {
                    return Err(Error::Syntax {
                        line,
                        msg: format!("index {idx} out of range for register {name}[{size}]"),
                    });
                }
                return Ok(offset + idx);
            }
        }
        Err(Error::Syntax { line, msg: format!("unknown register `{name}`") })
    }
}

fn parse_decl(s: &str, line: usize) -> Result<(String, usize)> {
    let open = s.find('[').ok_or_else(|| Error::Syntax {
        line,
        msg: format!("expected `name[index]`, got `{s}`"),
    })?;
    let close = s.rfind(']').ok_or_else(|| Error::Syntax {
        line,
        msg: format!("missing `]` in `{s}`"),
    })?;
    let idx: usize = s[open + 1..close].trim().parse().map_err(|_| Error::Syntax {
        line,
        msg: format!("bad index in `{s}`"),
    })?;
    Ok((s[..open].trim().to_string(), idx))
}

fn parse_params(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split(',').map(|p| eval_expr(p.trim(), line)).collect()
}

/// Tiny arithmetic evaluator for angle expressions: numbers, `pi`, `+ - * /`
/// and parentheses.
fn eval_expr(s: &str, line: usize) -> Result<f64> {
    let tokens = tokenize(s, line)?;
    let mut pos = 0usize;
    let v = expr(&tokens, &mut pos, line)?;
    if pos != tokens.len() {
        return Err(Error::Syntax { line, msg: format!("trailing input in expression `{s}`") });
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Op(char),
}

fn tokenize(s: &str, line: usize) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let mut chars = s.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            ' ' | '\t' => {}
            '+' | '-' | '*' | '/' | '(' | ')' => out.push(Tok::Op(c)),
            'p' => {
                if s[i..].starts_with("pi") {
                    out.push(Tok::Num(std::f64::consts::PI));
                    chars.next();
                } else {
                    return Err(Error::Syntax { line, msg: format!("bad token in `{s}`") });
                }
            }
            '0'..='9' | '.' => {
                let mut end = i + 1;
                while let Some(&(j, c2)) = chars.peek() {
                    if c2.is_ascii_digit() || c2 == '.' || c2 == 'e' || c2 == 'E' {
                        end = j + 1;
                        chars.next();
                    } else if (c2 == '+' || c2 == '-')
                        && s[..j].ends_with(['e', 'E'])
                    {
                        end = j + 1;
                        chars.next();
                    } else {
                        break;
                    }
                }
                let v: f64 = s[i..end].parse().map_err(|_| Error::Syntax {
                    line,
                    msg: format!("bad number `{}`", &s[i..end]),
                })?;
                out.push(Tok::Num(v));
            }
            _ => return Err(Error::Syntax { line, msg: format!("bad token `{c}` in `{s}`") }),
        }
    }
    Ok(out)
}

fn expr(tokens: &[Tok], pos: &mut usize, line: usize) -> Result<f64> {
    let mut v = term(tokens, pos, line)?;
    while let Some(Tok::Op(op @ ('+' | '-'))) = tokens.get(*pos) {
        let op = *op;
        *pos += 1;
        let rhs = term(tokens, pos, line)?;
        v = if op == '+' { v + rhs } else { v - rhs };
    }
    Ok(v)
}

fn term(tokens: &[Tok], pos: &mut usize, line: usize) -> Result<f64> {
    let mut v = factor(tokens, pos, line)?;
    while let Some(Tok::Op(op @ ('*' | '/'))) = tokens.get(*pos) {
        let op = *op;
        *pos += 1;
        let rhs = factor(tokens, pos, line)?;
        v = if op == '*' { v * rhs } else { v / rhs };
    }
    Ok(v)
}

fn factor(tokens: &[Tok], pos: &mut usize, line: usize) -> Result<f64> {
    match tokens.get(*pos) {
        Some(Tok::Num(v)) => {
            *pos += 1;
            Ok(*v)
        }
        Some(Tok::Op('-')) => {
            *pos += 1;
            Ok(-factor(tokens, pos, line)?)
        }
        Some(Tok::Op('(')) => {
            *pos += 1;
            let v = expr(tokens, pos, line)?;
            if tokens.get(*pos) != Some(&Tok::Op(')')) {
                return Err(Error::Syntax { line, msg: "missing `)`".into() });
            }
            *pos += 1;
            Ok(v)
        }
        _ => Err(Error::Syntax { line, msg: "expected number".into() }),
    }
}
