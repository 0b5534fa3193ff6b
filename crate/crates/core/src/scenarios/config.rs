//! Key-value scenario files.
//!
//! ```text
//! # comment
//! [name]                      # starts a scenario; keys above the first
//! manifold = cp1              # header are defaults for every section
//! bundle = trivial; ranks = 1 # `;` separates statements on one line
//! b = 1,2
//! m = 10..40                  # or `10..40:5`, a list, or m_min/m_max/m_step
//! points = 0.3+0.1i | -0.5i   # `|` between points, `,` between coordinates
//! ```
//!
//! Recognized keys: `manifold`, `epsilon`, `profile`, `bundle`, `ranks`,
//! `twists`, `points`, `m`, `m_min`, `m_max`, `m_step`, `b`, `precision`,
//! `quadrature`, `order`, `trace`, `remainder_window`, `seed`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    random_points, BundleSpec, Manifold, Perturbation, Precision, QuadratureChoice, Scenario,
};
use crate::geometry::Profile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfigErrorKind {
    Parse,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigError {
    pub kind: ConfigErrorKind,
    pub line: usize,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ConfigErrorKind::Parse => "parse error",
            ConfigErrorKind::Validation => "validation error",
        };
        match &self.key {
            Some(key) => write!(f, "line {}: {kind} in '{key}': {}", self.line, self.message),
            None => write!(f, "line {}: {kind}: {}", self.line, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

const KEYS: &[&str] = &[
    "manifold",
    "epsilon",
    "profile",
    "bundle",
    "ranks",
    "twists",
    "points",
    "m",
    "m_min",
    "m_max",
    "m_step",
    "b",
    "precision",
    "quadrature",
    "order",
    "trace",
    "remainder_window",
    "seed",
];

const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Default)]
struct Section {
    name: Option<String>,
    line: usize,
    entries: BTreeMap<String, (usize, String)>,
}

/// Parses scenario definitions, reporting every error found.
pub fn parse_config(text: &str) -> Result<Vec<Scenario>, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let mut defaults = Section {
        line: 1,
        ..Section::default()
    };
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        for stmt in content.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            if let Some(rest) = stmt.strip_prefix('[') {
                match rest.strip_suffix(']').map(str::trim) {
                    Some(name) if !name.is_empty() && !name.contains(char::is_whitespace) => {
                        if sections.iter().any(|s| s.name.as_deref() == Some(name)) {
                            errors.push(parse_error(
                                line,
                                None,
                                format!("duplicate scenario '{name}'"),
                            ));
                        }
                        sections.push(Section {
                            name: Some(name.to_string()),
                            line,
                            entries: BTreeMap::new(),
                        });
                    }
                    _ => errors.push(parse_error(
                        line,
                        None,
                        format!("malformed section header '{stmt}'"),
                    )),
                }
                continue;
            }
            let Some((key, value)) = stmt.split_once('=') else {
                errors.push(parse_error(
                    line,
                    None,
                    format!("expected 'key = value', found '{stmt}'"),
                ));
                continue;
            };
            let key = key.trim().to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                errors.push(parse_error(
                    line,
                    Some(&key),
                    format!("unknown key (allowed: {})", KEYS.join(", ")),
                ));
                continue;
            }
            let target = sections.last_mut().unwrap_or(&mut defaults);
            if target
                .entries
                .insert(key.clone(), (line, value.trim().to_string()))
                .is_some()
            {
                errors.push(parse_error(
                    line,
                    Some(&key),
                    "key given twice in the same section".into(),
                ));
            }
        }
    }
    let mut scenarios = Vec::new();
    if sections.is_empty() {
        if !defaults.entries.is_empty() {
            defaults.name = Some("scenario".into());
            sections.push(defaults.clone());
        }
    } else {
        for s in &mut sections {
            for (k, v) in &defaults.entries {
                s.entries.entry(k.clone()).or_insert_with(|| v.clone());
            }
        }
    }
    for s in &sections {
        match build(s) {
            Ok(sc) => scenarios.push(sc),
            Err(mut e) => errors.append(&mut e),
        }
    }
    if errors.is_empty() {
        Ok(scenarios)
    } else {
        errors.sort_by_key(|e| e.line);
        Err(errors)
    }
}

fn parse_error(line: usize, key: Option<&str>, message: String) -> ConfigError {
    ConfigError {
        kind: ConfigErrorKind::Parse,
        line,
        key: key.map(str::to_string),
        message,
    }
}

fn validation_error(line: usize, key: &str, message: String) -> ConfigError {
    ConfigError {
        kind: ConfigErrorKind::Validation,
        line,
        key: Some(key.to_string()),
        message,
    }
}

struct Reader<'a> {
    section: &'a Section,
    errors: Vec<ConfigError>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.section.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn get<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let (line, value) = self.raw(key)?;
        match parse(value) {
            Ok(v) => Some(v),
            Err(msg) => {
                self.errors.push(parse_error(line, Some(key), msg));
                None
            }
        }
    }

    fn line(&self, key: &str) -> usize {
        self.raw(key).map(|(l, _)| l).unwrap_or(self.section.line)
    }

    fn invalid(&mut self, key: &str, message: String) {
        let line = self.line(key);
        self.errors.push(validation_error(line, key, message));
    }
}

fn number<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("invalid number '{}'", s.trim()))
}

fn list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(number).collect()
}

fn range(s: &str) -> Result<(u32, u32, u32), String> {
    let (span, step) = match s.split_once(':') {
        Some((span, step)) => (span, number(step)?),
        None => (s, 1),
    };
    let (lo, hi) = span
        .split_once("..")
        .ok_or_else(|| format!("expected 'lo..hi', found '{}'", s.trim()))?;
    Ok((number(lo)?, number(hi)?, step))
}

fn schedule(s: &str) -> Result<Vec<u32>, String> {
    if s.contains("..") {
        let (lo, hi, step) = range(s)?;
        if step == 0 {
            return Err("step must be positive".into());
        }
        Ok((lo..=hi).step_by(step as usize).collect())
    } else {
        list(s)
    }
}

/// Inverse of the `m` grammar: `lo..hi[:step]` for progressions.
pub(crate) fn render_schedule(ms: &[u32]) -> String {
    if ms.len() >= 3 {
        let step = ms[1].saturating_sub(ms[0]);
        if step > 0 && ms.windows(2).all(|w| w[1] == w[0] + step) {
            let last = ms[ms.len() - 1];
            return if step == 1 {
                format!("{}..{}", ms[0], last)
            } else {
                format!("{}..{}:{}", ms[0], last, step)
            };
        }
    }
    ms.iter()
        .map(|m| m.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn complex(s: &str) -> Result<[f64; 2], String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("invalid complex number '{}'", s.trim());
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix('i') else {
        return Ok([t.parse().map_err(|_| bad())?, 0.0]);
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let imag = |x: &str| -> Result<f64, String> {
        match x {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => x.parse().map_err(|_| bad()),
        }
    };
    match split {
        Some(i) => Ok([body[..i].parse().map_err(|_| bad())?, imag(&body[i..])?]),
        None => Ok([0.0, imag(body)?]),
    }
}

fn points(s: &str, n: usize, seed: u64) -> Result<Vec<Vec<[f64; 2]>>, String> {
    let t = s.trim();
    if let Some(inner) = t.strip_prefix("random(").and_then(|r| r.strip_suffix(')')) {
        let count: usize = number(inner)?;
        return Ok(random_points(n, count, seed));
    }
    t.split('|')
        .map(|p| {
            let coords: Vec<[f64; 2]> = p.split(',').map(complex).collect::<Result<_, _>>()?;
            if coords.len() != n {
                return Err(format!(
                    "point '{}' has {} coordinates, manifold needs {n}",
                    p.trim(),
                    coords.len()
                ));
            }
            Ok(coords)
        })
        .collect()
}

fn boolean(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        other => Err(format!("expected true or false, found '{other}'")),
    }
}

fn build(section: &Section) -> Result<Scenario, Vec<ConfigError>> {
    let mut r = Reader {
        section,
        errors: Vec::new(),
    };
    let name = section.name.clone().unwrap_or_else(|| "scenario".into());

    let manifold = match r.raw("manifold") {
        None => {
            r.invalid("manifold", "missing required key".into());
            None
        }
        Some((_, v)) => {
            let found = Manifold::parse(v.trim());
            if found.is_none() {
                let allowed: Vec<_> = Manifold::ALL.iter().map(|m| m.name()).collect();
                r.invalid(
                    "manifold",
                    format!(
                        "unknown manifold '{}' (allowed: {})",
                        v.trim(),
                        allowed.join(", ")
                    ),
                );
            }
            found
        }
    };
    let n = manifold.map(Manifold::dimension).unwrap_or(1);

    let epsilon = r.get("epsilon", number::<f64>);
    let profile = r.get("profile", |s| {
        Profile::parse(s)
            .ok_or_else(|| format!("unknown profile '{}' (allowed: p1, p2, p3)", s.trim()))
    });
    let perturbation = match (epsilon, profile) {
        (_, Some(profile)) => Some(Perturbation {
            epsilon: epsilon.unwrap_or(DEFAULT_EPSILON),
            profile,
        }),
        (Some(_), None) => {
            r.invalid("epsilon", "epsilon needs a profile".into());
            None
        }
        (None, None) => None,
    };
    if let Some(p) = perturbation {
        if !p.epsilon.is_finite() {
            r.invalid("epsilon", "must be finite".into());
        }
        if manifold.is_some_and(Manifold::is_flat) {
            r.invalid("profile", "perturbations apply to cp1 and cp2 only".into());
        }
    }

    let bundle_kind = r.raw("bundle").map(|(_, v)| v.trim().to_string());
    let ranks = r.get("ranks", number::<usize>);
    let twists = r.get("twists", list::<i64>);
    let bundle = match bundle_kind.as_deref().unwrap_or("trivial") {
        "trivial" => {
            if twists.is_some() {
                r.invalid("twists", "twists require bundle = twisted".into());
            }
            let rank = ranks.unwrap_or(1);
            if rank == 0 {
                r.invalid("ranks", "rank must be at least 1".into());
            }
            Some(BundleSpec::Trivial { rank })
        }
        "twisted" => {
            if ranks.is_some() {
                r.invalid(
                    "ranks",
                    "the rank of a twisted bundle is the number of twists".into(),
                );
            }
            match twists {
                Some(t) if !t.is_empty() => {
                    if manifold.is_some_and(Manifold::is_flat) {
                        r.invalid(
                            "twists",
                            "twisted bundles are not supported on flat manifolds".into(),
                        );
                    }
                    Some(BundleSpec::Twisted { twists: t })
                }
                _ => {
                    r.invalid(
                        "twists",
                        "bundle = twisted needs a nonempty twists list".into(),
                    );
                    None
                }
            }
        }
        other => {
            r.invalid(
                "bundle",
                format!("unknown bundle '{other}' (allowed: trivial, twisted)"),
            );
            None
        }
    };

    let seed = r.get("seed", number::<u64>).unwrap_or(0);
    let pts = match r.raw("points") {
        Some(_) => r.get("points", |s| points(s, n, seed)),
        None => Some(vec![vec![[0.0, 0.0]; n]]),
    };

    let mut m_schedule = r.get("m", schedule);
    let explicit = ["m_min", "m_max", "m_step"]
        .iter()
        .any(|k| r.raw(k).is_some());
    if explicit {
        if m_schedule.is_some() {
            r.invalid("m", "give either m or m_min/m_max/m_step".into());
        }
        let lo = r.get("m_min", number::<u32>);
        let hi = r.get("m_max", number::<u32>);
        let step = r.get("m_step", number::<u32>).unwrap_or(1);
        match (lo, hi) {
            (Some(lo), Some(hi)) if step > 0 => {
                m_schedule = Some((lo..=hi).step_by(step as usize).collect())
            }
            (Some(_), Some(_)) => r.invalid("m_step", "step must be positive".into()),
            _ => r.invalid("m_min", "m_min and m_max are both required".into()),
        }
    }
    let m_key = if explicit { "m_min" } else { "m" };
    let m_schedule = m_schedule.unwrap_or_default();
    let flat = manifold.is_some_and(Manifold::is_flat);
    if m_schedule.is_empty() && !flat {
        r.invalid(m_key, "empty or missing m schedule".into());
    }
    if m_schedule.contains(&0) {
        r.invalid(m_key, "m must be at least 1".into());
    }
    if m_schedule.windows(2).any(|w| w[0] >= w[1]) {
        r.invalid(m_key, "m values must be strictly increasing".into());
    }

    let b_list = r.get("b", list::<u32>).unwrap_or_else(|| vec![1]);
    if b_list.is_empty() || b_list.contains(&0) {
        r.invalid("b", "b values must be positive".into());
    }

    let precision = r
        .get("precision", |s| {
            Precision::parse(s.trim())
                .ok_or_else(|| format!("unknown precision '{}' (allowed: double, high)", s.trim()))
        })
        .unwrap_or(Precision::Double);
    let quadrature = r
        .get("quadrature", |s| {
            QuadratureChoice::parse(s.trim()).ok_or_else(|| {
                format!(
                    "unknown quadrature '{}' (allowed: auto, exact, radial, tensor)",
                    s.trim()
                )
            })
        })
        .unwrap_or(QuadratureChoice::Auto);
    match (quadrature, perturbation) {
        (QuadratureChoice::Exact, Some(_)) => r.invalid(
            "quadrature",
            "exact Gram matrices need an unperturbed Fubini–Study metric".into(),
        ),
        (QuadratureChoice::Radial, Some(p)) if !p.profile.is_radial() => r.invalid(
            "quadrature",
            format!("profile {} is not torus invariant", p.profile),
        ),
        (QuadratureChoice::Tensor, _) if n > 2 => {
            r.invalid("quadrature", "tensor rule supports n <= 2".into())
        }
        _ => {}
    }
    let order = r.get("order", number::<usize>);
    let trace_check = r.get("trace", boolean).unwrap_or(false);
    let remainder_window = r.get("remainder_window", |s| {
        let (lo, hi, step) = range(s)?;
        if step != 1 {
            return Err("remainder window takes no step".into());
        }
        Ok((lo, hi))
    });
    if let Some((lo, hi)) = remainder_window {
        if lo > hi {
            r.invalid("remainder_window", "empty window".into());
        }
    }

    match (manifold, bundle, pts) {
        (Some(manifold), Some(bundle), Some(points)) if r.errors.is_empty() => Ok(Scenario {
            name,
            manifold,
            perturbation,
            bundle,
            points,
            m_schedule,
            b_list,
            precision,
            quadrature,
            order,
            trace_check,
            remainder_window,
        }),
        _ => Err(r.errors),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_one_liner() {
        let s = parse_config("manifold=cp1; bundle=trivial; ranks=1; b=1,2; m=10..40").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].b_list, vec![1, 2]);
        assert_eq!(s[0].m_schedule, (10..=40).collect::<Vec<_>>());
    }

    #[test]
    fn unknown_manifold_is_validation_error() {
        let e = parse_config("manifold = cp7\nm = 5..9").unwrap_err();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].kind, ConfigErrorKind::Validation);
        assert_eq!(e[0].key.as_deref(), Some("manifold"));
        assert_eq!(e[0].line, 1);
        assert!(e[0].message.contains("cp1"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "[a]\nmanifold = cp1\nm = 5..9\nfoo = 1\n[b]\nmanifold = flat1\nbundle = twisted\ntwists = 1\n";
        let e = parse_config(text).unwrap_err();
        assert_eq!(e[0].line, 4);
        assert_eq!(e[0].kind, ConfigErrorKind::Parse);
        assert!(e
            .iter()
            .any(|x| x.line == 8 && x.key.as_deref() == Some("twists")));
    }

    #[test]
    fn m_min_below_one_rejected() {
        let e = parse_config("manifold=cp1; m_min=0; m_max=4").unwrap_err();
        assert!(e[0].message.contains("at least 1"), "{e:?}");
    }

    #[test]
    fn defaults_apply_to_sections() {
        let text =
            "manifold = cp1\nm = 5..8\n[x]\nb = 2\n[y]\nmanifold = cp2\npoints = 0.1-0.2i, 1e-3i\n";
        let s = parse_config(text).unwrap();
        assert_eq!(s[0].manifold, Manifold::Cp1);
        assert_eq!(s[1].points, vec![vec![[0.1, -0.2], [0.0, 1e-3]]]);
        assert_eq!(s[1].m_schedule, vec![5, 6, 7, 8]);
    }

    #[test]
    fn complex_forms() {
        assert_eq!(complex("2").unwrap(), [2.0, 0.0]);
        assert_eq!(complex("-i").unwrap(), [0.0, -1.0]);
        assert_eq!(complex("1e-3-2.5e+2i").unwrap(), [1e-3, -250.0]);
        assert!(complex("1+xi").is_err());
    }

    #[test]
    fn schedules_render_compactly() {
        assert_eq!(render_schedule(&[5, 6, 7, 8]), "5..8");
        assert_eq!(render_schedule(&[10, 20, 30]), "10..30:10");
        assert_eq!(render_schedule(&[1, 2, 4]), "1,2,4");
        assert_eq!(schedule("10..30:10").unwrap(), vec![10, 20, 30]);
    }

    #[test]
    fn empty_text_has_no_scenarios() {
        assert_eq!(parse_config("# nothing\n\n").unwrap(), vec![]);
    }
}
