//! Canonical text formats for networks (`.mfnet`) and demand (`.mftrip`).
//!
//! One record per line, fields in fixed order, entities in id order and
//! floats printed with nine significant digits, so that
//! serialize → parse → serialize is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::*;

pub const NET_HEADER: &str = "MFNET 1";
pub const TRIP_HEADER: &str = "MFTRIP 1";

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        msg: msg.into(),
    })
}

/// Format a float with nine significant digits, `%g` style.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..9).contains(&exp) {
        let mant = trim_zeros(mant);
        format!("{mant}e{exp}")
    } else {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Round a value to what the text format can represent.
pub fn canon(x: f64) -> f64 {
    fmt_float(x).parse().unwrap_or(x)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".to_string())
}

fn join<T, F: Fn(&T) -> String>(items: &[T], f: F) -> String {
    let parts: Vec<String> = items.iter().map(f).collect();
    format!("[{}]", parts.join(","))
}

fn point(p: &Point) -> String {
    format!("({},{})", fmt_float(p.x), fmt_float(p.y))
}

pub fn write_network(net: &RoadNetwork) -> String {
    let mut out = String::new();
    out.push_str(NET_HEADER);
    out.push('\n');
    for l in &net.lanes {
        let parent = match l.parent {
            Parent::Road(r) => format!("road:{r}"),
            Parent::Junction(j) => format!("junc:{j}"),
        };
        let _ = writeln!(
            out,
            "LANE {} {} {} {} {} {} pred={} succ={} left={} right={} pts={}",
            l.id,
            parent,
            fmt_float(l.length),
            fmt_float(l.max_speed),
            l.turn.as_str(),
            u8::from(l.restricted),
            join(&l.predecessors, |x| x.to_string()),
            join(&l.successors, |x| x.to_string()),
            opt(l.left),
            opt(l.right),
            join(&l.centerline, point),
        );
    }
    for r in &net.roads {
        let _ = writeln!(
            out,
            "ROAD {} lanes={} plans={} active={} tidal={} toll={}",
            r.id,
            join(&r.lanes, |x| x.to_string()),
            join(&r.lane_plans, |p| join(p, |t| t.to_string())),
            r.active_plan,
            opt(r.tidal_partner),
            fmt_float(r.toll),
        );
    }
    for j in &net.junctions {
        let phases = join(&j.phases, |p| {
            j.lanes.iter().map(|l| p.state(*l).letter()).collect::<String>()
        });
        let _ = writeln!(
            out,
            "JUNC {} lanes={} phases={} program={} policy={}",
            j.id,
            join(&j.lanes, |x| x.to_string()),
            phases,
            join(&j.fixed_program, |(p, d)| format!("({p},{})", fmt_float(*d))),
            j.policy.as_str(),
        );
    }
    for a in &net.aois {
        let _ = writeln!(
            out,
            "AOI {} gates={} pts={}",
            a.id,
            join(&a.gates, |(l, s)| format!("({l},{})", fmt_float(*s))),
            join(&a.polygon, point),
        );
    }
    out
}

fn endpoint(ep: &Endpoint) -> String {
    match ep {
        Endpoint::Aoi(a) => format!("aoi:{a}"),
        Endpoint::Lane(l, s) => format!("lane:{l}:{}", fmt_float(*s)),
    }
}

pub fn write_demand(trips: &[TripPlan]) -> String {
    let mut out = String::new();
    out.push_str(TRIP_HEADER);
    out.push('\n');
    for t in trips {
        let p = &t.profile;
        let _ = writeln!(
            out,
            "TRIP {} {} {} {} route={} profile=({},{},{},{},{},{})",
            t.person,
            fmt_float(t.departure),
            endpoint(&t.origin),
            endpoint(&t.destination),
            join(&t.route, |x| x.to_string()),
            fmt_float(p.a_max),
            fmt_float(p.a_comf),
            fmt_float(p.headway),
            fmt_float(p.min_gap),
            fmt_float(p.v_max),
            fmt_float(p.length),
        );
    }
    out
}

// ---- parsing -------------------------------------------------------------

/// Split the inside of `[...]` or `(...)` on top-level commas.
fn split_group(s: &str, open: char, close: char, line: usize) -> Result<Vec<&str>, ParseError> {
    let inner = s
        .strip_prefix(open)
        .and_then(|x| x.strip_suffix(close))
        .ok_or_else(|| ParseError {
            line,
            msg: format!("expected {open}...{close}, got `{s}`"),
        })?;
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in inner.char_indices() {
        match c {
            '[' | '(' => depth += 1,
            ']' | ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&inner[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&inner[start..]);
    Ok(parts)
}

fn num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, ParseError> {
    s.parse().or_else(|_| err(line, format!("bad {what} `{s}`")))
}

fn float(s: &str, line: usize, what: &str) -> Result<f64, ParseError> {
    let x: f64 = num(s, line, what)?;
    if x.is_nan() {
        return err(line, format!("{what} is NaN"));
    }
    Ok(x)
}

fn field<'a>(tok: Option<&&'a str>, key: &str, line: usize) -> Result<&'a str, ParseError> {
    let tok = tok.ok_or_else(|| ParseError {
        line,
        msg: format!("missing field `{key}`"),
    })?;
    tok.strip_prefix(key)
        .and_then(|x| x.strip_prefix('='))
        .ok_or_else(|| ParseError {
            line,
            msg: format!("expected `{key}=`, got `{tok}`"),
        })
}

fn pos<'a>(toks: &[&'a str], i: usize, what: &str, line: usize) -> Result<&'a str, ParseError> {
    toks.get(i).copied().ok_or_else(|| ParseError {
        line,
        msg: format!("missing {what}"),
    })
}

fn id_list<T>(s: &str, line: usize, make: fn(u32) -> T) -> Result<Vec<T>, ParseError> {
    split_group(s, '[', ']', line)?
        .into_iter()
        .map(|x| num::<u32>(x, line, "id").map(make))
        .collect()
}

fn opt_id<T>(s: &str, line: usize, make: fn(u32) -> T) -> Result<Option<T>, ParseError> {
    if s == "-" {
        Ok(None)
    } else {
        num::<u32>(s, line, "id").map(|x| Some(make(x)))
    }
}

fn points(s: &str, line: usize) -> Result<Vec<Point>, ParseError> {
    split_group(s, '[', ']', line)?
        .into_iter()
        .map(|p| {
            let xy = split_group(p, '(', ')', line)?;
            if xy.len() != 2 {
                return err(line, format!("bad point `{p}`"));
            }
            Ok(Point::new(float(xy[0], line, "x")?, float(xy[1], line, "y")?))
        })
        .collect()
}

fn turn_set(s: &str, line: usize) -> Result<TurnSet, ParseError> {
    if s == "-" {
        return Ok(TurnSet::EMPTY);
    }
    let mut t = TurnSet::EMPTY;
    for c in s.chars() {
        t.insert(match c {
            'S' => Turn::Straight,
            'L' => Turn::Left,
            'R' => Turn::Right,
            _ => return err(line, format!("bad turn set `{s}`")),
        });
    }
    Ok(t)
}

fn dense<T>(mut items: Vec<(u32, T)>, kind: &str) -> Result<Vec<T>, ParseError> {
    items.sort_by_key(|(id, _)| *id);
    for (i, (id, _)) in items.iter().enumerate() {
        if *id as usize != i {
            return err(0, format!("{kind} ids must be contiguous from 0; found {id} at rank {i}"));
        }
    }
    Ok(items.into_iter().map(|(_, x)| x).collect())
}

pub fn parse_network(text: &str) -> Result<RoadNetwork, ParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == NET_HEADER => {}
        _ => return err(1, format!("expected header `{NET_HEADER}`")),
    }
    let mut lanes = Vec::new();
    let mut roads = Vec::new();
    let mut juncs = Vec::new();
    let mut aois = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        let Some(kind) = toks.first() else { continue };
        let id: u32 = num(pos(&toks, 1, "id", line)?, line, "id")?;
        match *kind {
            "LANE" => {
                let parent_tok = pos(&toks, 2, "parent", line)?;
                let parent = if let Some(r) = parent_tok.strip_prefix("road:") {
                    Parent::Road(RoadId(num(r, line, "road id")?))
                } else if let Some(j) = parent_tok.strip_prefix("junc:") {
                    Parent::Junction(JunctionId(num(j, line, "junction id")?))
                } else {
                    return err(line, format!("bad parent `{parent_tok}`"));
                };
                let turn = match pos(&toks, 5, "turn", line)? {
                    "STRAIGHT" => Turn::Straight,
                    "LEFT" => Turn::Left,
                    "RIGHT" => Turn::Right,
                    t => return err(line, format!("bad turn `{t}`")),
                };
                let restricted = match pos(&toks, 6, "restricted flag", line)? {
                    "0" => false,
                    "1" => true,
                    t => return err(line, format!("bad restricted flag `{t}`")),
                };
                lanes.push((
                    id,
                    Lane {
                        id: LaneId(id),
                        parent,
                        length: float(pos(&toks, 3, "length", line)?, line, "length")?,
                        max_speed: float(pos(&toks, 4, "max speed", line)?, line, "max speed")?,
                        turn,
                        restricted,
                        predecessors: id_list(field(toks.get(7), "pred", line)?, line, LaneId)?,
                        successors: id_list(field(toks.get(8), "succ", line)?, line, LaneId)?,
                        left: opt_id(field(toks.get(9), "left", line)?, line, LaneId)?,
                        right: opt_id(field(toks.get(10), "right", line)?, line, LaneId)?,
                        centerline: points(field(toks.get(11), "pts", line)?, line)?,
                    },
                ));
            }
            "ROAD" => {
                let plans = split_group(field(toks.get(3), "plans", line)?, '[', ']', line)?
                    .into_iter()
                    .map(|p| {
                        split_group(p, '[', ']', line)?
                            .into_iter()
                            .map(|t| turn_set(t, line))
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                roads.push((
                    id,
                    Road {
                        id: RoadId(id),
                        lanes: id_list(field(toks.get(2), "lanes", line)?, line, LaneId)?,
                        lane_plans: plans,
                        active_plan: num(field(toks.get(4), "active", line)?, line, "active plan")?,
                        tidal_partner: opt_id(field(toks.get(5), "tidal", line)?, line, RoadId)?,
                        toll: float(field(toks.get(6), "toll", line)?, line, "toll")?,
                    },
                ));
            }
            "JUNC" => {
                let jl = id_list(field(toks.get(2), "lanes", line)?, line, LaneId)?;
                let phases = split_group(field(toks.get(3), "phases", line)?, '[', ']', line)?
                    .into_iter()
                    .map(|p| {
                        if p.chars().count() != jl.len() {
                            return err(line, format!("phase `{p}` does not cover {} lanes", jl.len()));
                        }
                        let mut states = BTreeMap::new();
                        for (l, c) in jl.iter().zip(p.chars()) {
                            let light = match c {
                                'G' => Light::Green,
                                'Y' => Light::Yellow,
                                'R' => Light::Red,
                                _ => return err(line, format!("bad light `{c}`")),
                            };
                            states.insert(*l, light);
                        }
                        Ok(SignalPhase { lane_states: states })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let program = split_group(field(toks.get(4), "program", line)?, '[', ']', line)?
                    .into_iter()
                    .map(|e| {
                        let pd = split_group(e, '(', ')', line)?;
                        if pd.len() != 2 {
                            return err(line, format!("bad program entry `{e}`"));
                        }
                        Ok((num(pd[0], line, "phase")?, float(pd[1], line, "duration")?))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let policy_tok = field(toks.get(5), "policy", line)?;
                let policy = TlPolicy::parse(policy_tok)
                    .ok_or_else(|| ParseError { line, msg: format!("bad policy `{policy_tok}`") })?;
                juncs.push((
                    id,
                    Junction {
                        id: JunctionId(id),
                        lanes: jl,
                        phases,
                        fixed_program: program,
                        policy,
                    },
                ));
            }
            "AOI" => {
                let gates = split_group(field(toks.get(2), "gates", line)?, '[', ']', line)?
                    .into_iter()
                    .map(|g| {
                        let ls = split_group(g, '(', ')', line)?;
                        if ls.len() != 2 {
                            return err(line, format!("bad gate `{g}`"));
                        }
                        Ok((LaneId(num(ls[0], line, "lane")?), float(ls[1], line, "offset")?))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let polygon = match toks.get(3) {
                    Some(_) => points(field(toks.get(3), "pts", line)?, line)?,
                    None => Vec::new(),
                };
                aois.push((
                    id,
                    Aoi {
                        id: AoiId(id),
                        polygon,
                        gates,
                    },
                ));
            }
            other => return err(line, format!("unknown record `{other}`")),
        }
    }
    Ok(RoadNetwork {
        lanes: dense(lanes, "lane")?,
        roads: dense(roads, "road")?,
        junctions: dense(juncs, "junction")?,
        aois: dense(aois, "aoi")?,
    })
}

fn parse_endpoint(s: &str, line: usize) -> Result<Endpoint, ParseError> {
    if let Some(a) = s.strip_prefix("aoi:") {
        return Ok(Endpoint::Aoi(AoiId(num(a, line, "aoi id")?)));
    }
    if let Some(rest) = s.strip_prefix("lane:") {
        if let Some((l, off)) = rest.split_once(':') {
            return Ok(Endpoint::Lane(
                LaneId(num(l, line, "lane id")?),
                float(off, line, "offset")?,
            ));
        }
    }
    err(line, format!("bad endpoint `{s}`"))
}

pub fn parse_demand(text: &str) -> Result<Vec<TripPlan>, ParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRIP_HEADER => {}
        _ => return err(1, format!("expected header `{TRIP_HEADER}`")),
    }
    let mut trips = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        let Some(kind) = toks.first() else { continue };
        if *kind != "TRIP" {
            return err(line, format!("unknown record `{kind}`"));
        }
        let prof = split_group(field(toks.get(6), "profile", line)?, '(', ')', line)?;
        if prof.len() != 6 {
            return err(line, "profile needs 6 values");
        }
        let pv: Vec<f64> = prof
            .iter()
            .map(|x| float(x, line, "profile value"))
            .collect::<Result<_, _>>()?;
        trips.push(TripPlan {
            person: VehicleId(num(pos(&toks, 1, "person", line)?, line, "person")?),
            departure: float(pos(&toks, 2, "departure", line)?, line, "departure")?,
            origin: parse_endpoint(pos(&toks, 3, "origin", line)?, line)?,
            destination: parse_endpoint(pos(&toks, 4, "destination", line)?, line)?,
            route: id_list(field(toks.get(5), "route", line)?, line, RoadId)?,
            profile: VehicleProfile {
                a_max: pv[0],
                a_comf: pv[1],
                headway: pv[2],
                min_gap: pv[3],
                v_max: pv[4],
                length: pv[5],
            },
        });
    }
    Ok(trips)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(-0.0), "0");
        assert_eq!(fmt_float(300.0), "300");
        assert_eq!(fmt_float(16.667), "16.667");
        assert_eq!(fmt_float(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_float(123456789.4), "123456789");
        assert_eq!(fmt_float(1234567894.0), "1.23456789e9");
        assert_eq!(fmt_float(0.000012345), "1.2345e-5");
        assert_eq!(fmt_float(99999.99996), "100000");
    }

    #[test]
    fn canon_is_a_fixed_point() {
        for x in [std::f64::consts::PI, 1e-7, 28800.123456789, 7.0 / 9.0] {
            let c = canon(x);
            assert_eq!(canon(c), c);
            assert_eq!(fmt_float(c), fmt_float(x));
        }
    }

    #[test]
    fn rejects_bad_header_and_reports_line() {
        assert_eq!(parse_network("MFNET 2\n").unwrap_err().line, 1);
        let e = parse_network("MFNET 1\nLANE 0 road:0 10 10 SIDEWAYS 0\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.msg.contains("SIDEWAYS"));
        let e = parse_demand("MFTRIP 1\n\nTRIP 0 10 aoi:0 aoi:1 route=[0] profile=(1,2)\n")
            .unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn phase_string_must_cover_lanes() {
        let text = "MFNET 1\nJUNC 0 lanes=[0,1] phases=[G] program=[] policy=NONE\n";
        assert!(parse_network(text).unwrap_err().msg.contains("cover"));
    }
}
