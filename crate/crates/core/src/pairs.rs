//! Cause-effect pair files: metadata, parsing, day-window restrictions,
//! canonical serialization and an optional HTTPS fetcher.
//!
//! Pair files hold whitespace-separated numeric rows; `pairmeta.txt` holds
//! one record per pair: `id cause_first cause_last effect_first effect_last
//! weight`, with 1-based column indices.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming the offline data directory.
pub const DATA_DIR_ENV: &str = "CAUSAL_GAP_DATA_DIR";
pub const DEFAULT_BASE_URL: &str = "https://webdav.tuebingen.mpg.de/cause-effect/";
pub const META_FILE: &str = "pairmeta.txt";
const MIN_ROWS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub id: u32,
    /// 1-based column of the cause.
    pub cause_col: usize,
    /// 1-based column of the effect.
    pub effect_col: usize,
    pub weight: f64,
}

impl PairMeta {
    /// Metadata for a two-column file with the cause first.
    pub fn two_column(id: u32) -> Self {
        PairMeta {
            id,
            cause_col: 1,
            effect_col: 2,
            weight: 1.0,
        }
    }
}

fn meta_error(line: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(META_FILE),
        line: 0,
        message: format!("{}: '{}'", message.into(), line.trim()),
    }
}

/// Parses one metadata record. Multi-column cause or effect ranges are
/// rejected as unsupported.
pub fn parse_meta(line: &str) -> Result<PairMeta> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(meta_error(line, format!("expected 6 fields, found {}", fields.len())));
    }
    let id: u32 = fields[0].parse().map_err(|_| meta_error(line, "bad pair id"))?;
    let mut cols = [0usize; 4];
    for (c, f) in cols.iter_mut().zip(&fields[1..5]) {
        *c = f
            .parse()
            .map_err(|_| meta_error(line, format!("bad column index '{f}'")))?;
        if *c == 0 {
            return Err(meta_error(line, "column indices are 1-based"));
        }
    }
    let weight: f64 = fields[5].parse().map_err(|_| meta_error(line, "bad weight"))?;
    if cols[0] != cols[1] || cols[2] != cols[3] {
        return Err(Error::Unsupported(format!(
            "pair {id} has a multi-column cause or effect ({}-{}, {}-{}); only bivariate pairs are handled",
            cols[0], cols[1], cols[2], cols[3]
        )));
    }
    if cols[0] == cols[2] {
        return Err(meta_error(line, "cause and effect share a column"));
    }
    Ok(PairMeta {
        id,
        cause_col: cols[0],
        effect_col: cols[2],
        weight,
    })
}

/// Reads every record of a metadata file; unsupported (multivariate) pairs
/// are skipped, malformed lines are errors.
pub fn read_meta_file(path: &Path) -> Result<Vec<PairMeta>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_meta(line) {
            Ok(m) => out.push(m),
            Err(Error::Unsupported(_)) => {}
            Err(Error::Parse { message, .. }) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn pair_file_name(id: u32) -> String {
    format!("pair{id:04}.txt")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseEffectPair {
    pub id: u32,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Parsed columns after dropping non-finite rows.
    pub raw_columns: Vec<Vec<f64>>,
    pub meta: PairMeta,
    pub rows_in: usize,
    pub rows_dropped: usize,
}

impl CauseEffectPair {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn rows_used(&self) -> usize {
        self.x.len()
    }
}

/// Parses whitespace-separated numeric text. Returns the columns, the number
/// of data rows read and the number dropped for non-finite values.
fn parse_table(text: &str, path: &Path) -> Result<(Vec<Vec<f64>>, usize, usize)> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut rows = 0;
    let mut dropped = 0;
    for (i, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let w = *width.get_or_insert(tokens.len());
        if tokens.len() != w {
            return Err(err(
                i + 1,
                format!("row {} has {} columns, expected {w}", rows + 1, tokens.len()),
            ));
        }
        if cols.is_empty() {
            cols = vec![Vec::new(); w];
        }
        // str::parse is locale independent and accepts nan/inf
        let mut values = Vec::with_capacity(w);
        for t in &tokens {
            let v: f64 = t.parse().map_err(|_| err(i + 1, format!("non-numeric token '{t}'")))?;
            values.push(v);
        }
        rows += 1;
        if values.iter().all(|v| v.is_finite()) {
            for (c, v) in cols.iter_mut().zip(values) {
                c.push(v);
            }
        } else {
            dropped += 1;
        }
    }
    if rows == 0 {
        return Err(err(0, "file holds no data rows".into()));
    }
    Ok((cols, rows, dropped))
}

fn pair_from_columns(
    cols: Vec<Vec<f64>>,
    rows: usize,
    dropped: usize,
    meta: PairMeta,
    path: &Path,
) -> Result<CauseEffectPair> {
    let w = cols.len();
    if meta.cause_col > w || meta.effect_col > w {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!(
                "metadata names columns {} and {} but the file has {w}",
                meta.cause_col, meta.effect_col
            ),
        });
    }
    let x = cols[meta.cause_col - 1].clone();
    let y = cols[meta.effect_col - 1].clone();
    if x.len() < MIN_ROWS {
        return Err(Error::domain(format!(
            "pair {} has {} usable rows, need at least {MIN_ROWS}",
            meta.id,
            x.len()
        )));
    }
    Ok(CauseEffectPair {
        id: meta.id,
        x,
        y,
        raw_columns: cols,
        meta,
        rows_in: rows,
        rows_dropped: dropped,
    })
}

/// Loads a pair file, assigning cause and effect per `meta`.
pub fn load_pair(path: &Path, meta: &PairMeta) -> Result<CauseEffectPair> {
    let text = fs::read_to_string(path)?;
    let (cols, rows, dropped) = parse_table(&text, path)?;
    pair_from_columns(cols, rows, dropped, *meta, path)
}

/// Loads pair `id` from `dir`, taking metadata from `dir/pairmeta.txt` when
/// present and assuming a two-column cause-first layout otherwise.
pub fn load_pair_by_id(dir: &Path, id: u32) -> Result<CauseEffectPair> {
    let meta_path = dir.join(META_FILE);
    let meta = if meta_path.exists() {
        read_meta_file(&meta_path)?
            .into_iter()
            .find(|m| m.id == id)
            .unwrap_or_else(|| PairMeta::two_column(id))
    } else {
        PairMeta::two_column(id)
    };
    load_pair(&dir.join(pair_file_name(id)), &meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    None,
    SummerWindow,
    First183,
}

impl Restriction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Restriction::None => "none",
            Restriction::SummerWindow => "summer",
            Restriction::First183 => "first183",
        }
    }
}

impl fmt::Display for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Restriction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Restriction::None),
            "summer" | "summer_window" => Ok(Restriction::SummerWindow),
            "first183" | "first_183" => Ok(Restriction::First183),
            _ => Err(Error::domain(format!("unknown restriction '{s}'"))),
        }
    }
}

/// First and last retained day (1-based day of year) of the summer window:
/// April 1 to September 30 in common years, March 31 to September 29 in
/// leap years, which are the same day indices.
pub const SUMMER_DAYS: (f64, f64) = (91.0, 273.0);

/// Keeps the rows whose cause (day of year) falls in the requested window.
pub fn restrict_days(pair: &CauseEffectPair, mode: Restriction) -> Result<CauseEffectPair> {
    let keep: Box<dyn Fn(f64) -> bool> = match mode {
        Restriction::None => return Ok(pair.clone()),
        Restriction::SummerWindow => Box::new(|d| (SUMMER_DAYS.0..=SUMMER_DAYS.1).contains(&d)),
        Restriction::First183 => Box::new(|d| d <= 183.0),
    };
    let rows: Vec<usize> = (0..pair.n()).filter(|&i| keep(pair.x[i])).collect();
    if rows.is_empty() {
        return Err(Error::domain(format!(
            "restriction '{mode}' leaves no rows of pair {}",
            pair.id
        )));
    }
    let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    Ok(CauseEffectPair {
        id: pair.id,
        x: pick(&pair.x),
        y: pick(&pair.y),
        raw_columns: pair.raw_columns.iter().map(|c| pick(c)).collect(),
        meta: pair.meta,
        rows_in: pair.rows_in,
        rows_dropped: pair.rows_dropped,
    })
}

/// Writes the canonical two-column form (cause, effect) with 17
/// significant digits, which round-trips every `f64`.
pub fn write_pair(pair: &CauseEffectPair, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(pair.n() * 48);
    for (a, b) in pair.x.iter().zip(&pair.y) {
        out.push_str(&format!("{a:.16e} {b:.16e}\n"));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Data directory from an explicit path or the environment.
pub fn resolve_data_dir(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchedFile {
    pub path: PathBuf,
    /// False when an existing valid file was kept.
    pub downloaded: bool,
}

/// Where pair files come from: an HTTP(S) base URL or a local directory
/// (a plain path or a `file://` URL).
enum Source {
    #[cfg(feature = "fetch")]
    Http(String),
    Local(PathBuf),
}

impl Source {
    fn parse(base: &str) -> Result<Self> {
        if let Some(p) = base.strip_prefix("file://") {
            return Ok(Source::Local(PathBuf::from(p)));
        }
        if base.starts_with("http://") || base.starts_with("https://") {
            #[cfg(feature = "fetch")]
            {
                let mut b = base.to_string();
                if !b.ends_with('/') {
                    b.push('/');
                }
                return Ok(Source::Http(b));
            }
            #[cfg(not(feature = "fetch"))]
            return Err(Error::Unsupported("built without the `fetch` feature".into()));
        }
        Ok(Source::Local(PathBuf::from(base)))
    }

    fn get(&self, name: &str, id: Option<u32>) -> Result<Vec<u8>> {
        match self {
            #[cfg(feature = "fetch")]
            Source::Http(base) => http_get(&format!("{base}{name}"), id),
            Source::Local(dir) => {
                let p = dir.join(name);
                match fs::read(&p) {
                    Ok(b) => Ok(b),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => match id {
                        Some(id) => Err(Error::NotFound {
                            id,
                            url: p.display().to_string(),
                        }),
                        None => Err(Error::Fetch {
                            what: name.into(),
                            message: format!("{} does not exist", p.display()),
                        }),
                    },
                    Err(e) => Err(e.into()),
                }
            }
        }
    }

    /// Size of the remote copy when cheaply known.
    fn size(&self, name: &str) -> Option<u64> {
        match self {
            Source::Local(dir) => fs::metadata(dir.join(name)).ok().map(|m| m.len()),
            #[cfg(feature = "fetch")]
            Source::Http(_) => None,
        }
    }
}

/// Per-file download cap.
pub const MAX_DOWNLOAD_BYTES: u64 = 10 * 1024 * 1024;

#[cfg(feature = "fetch")]
fn http_get(url: &str, id: Option<u32>) -> Result<Vec<u8>> {
    use std::time::Duration;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(30)))
        .http_status_as_error(false)
        .build()
        .into();
    let fetch_err = |message: String| Error::Fetch {
        what: url.to_string(),
        message,
    };
    let mut resp = agent.get(url).call().map_err(|e| fetch_err(e.to_string()))?;
    let status = resp.status().as_u16();
    if status == 404 {
        return Err(match id {
            Some(id) => Error::NotFound {
                id,
                url: url.to_string(),
            },
            None => fetch_err("HTTP 404".into()),
        });
    }
    if status >= 400 {
        return Err(fetch_err(format!("HTTP {status}")));
    }
    resp.body_mut()
        .with_config()
        .limit(MAX_DOWNLOAD_BYTES)
        .read_to_vec()
        .map_err(|e| fetch_err(e.to_string()))
}

fn store(dest: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dest.join(name);
    let tmp = dest.join(format!(".{name}.part"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

fn validate_pair_bytes(bytes: &[u8], meta: &PairMeta, name: &str) -> Result<()> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Fetch {
        what: name.into(),
        message: format!("not UTF-8 text: {e}"),
    })?;
    let (cols, rows, dropped) = parse_table(text, Path::new(name)).map_err(|e| Error::Fetch {
        what: name.into(),
        message: e.to_string(),
    })?;
    pair_from_columns(cols, rows, dropped, *meta, Path::new(name))
        .map(|_| ())
        .map_err(|e| Error::Fetch {
            what: name.into(),
            message: e.to_string(),
        })
}

/// Downloads `pairmeta.txt` and the requested pair files into `dest`.
///
/// Existing files are kept when they parse (and, for local sources, when
/// their size matches); every new file is parsed before it is stored.
pub fn fetch_pairs(ids: &[u32], base: &str, dest: &Path) -> Result<Vec<FetchedFile>> {
    let source = Source::parse(base)?;
    fs::create_dir_all(dest)?;
    let mut out = Vec::new();

    let meta_path = dest.join(META_FILE);
    let metas = match read_meta_file(&meta_path) {
        Ok(m)
            if source
                .size(META_FILE)
                .is_none_or(|s| fs::metadata(&meta_path).map(|x| x.len()).ok() == Some(s)) =>
        {
            out.push(FetchedFile {
                path: meta_path,
                downloaded: false,
            });
            m
        }
        _ => {
            let bytes = source.get(META_FILE, None)?;
            let text = String::from_utf8_lossy(&bytes).into_owned();
            let mut metas = Vec::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                match parse_meta(line) {
                    Ok(m) => metas.push(m),
                    Err(Error::Unsupported(_)) => {}
                    Err(e) => {
                        return Err(Error::Fetch {
                            what: META_FILE.into(),
                            message: e.to_string(),
                        })
                    }
                }
            }
            out.push(FetchedFile {
                path: store(dest, META_FILE, &bytes)?,
                downloaded: true,
            });
            metas
        }
    };

    for &id in ids {
        let name = pair_file_name(id);
        let meta = metas
            .iter()
            .find(|m| m.id == id)
            .copied()
            .unwrap_or_else(|| PairMeta::two_column(id));
        let path = dest.join(&name);
        let size_ok = source
            .size(&name)
            .is_none_or(|s| fs::metadata(&path).map(|m| m.len()).ok() == Some(s));
        if path.exists() && size_ok && load_pair(&path, &meta).is_ok() {
            out.push(FetchedFile {
                path,
                downloaded: false,
            });
            continue;
        }
        let bytes = source.get(&name, Some(id))?;
        validate_pair_bytes(&bytes, &meta, &name)?;
        out.push(FetchedFile {
            path: store(dest, &name, &bytes)?,
            downloaded: true,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_records() {
        let m = parse_meta("0042 1 1 2 2 1.0").unwrap();
        assert_eq!(
            m,
            PairMeta {
                id: 42,
                cause_col: 1,
                effect_col: 2,
                weight: 1.0
            }
        );
        let m = parse_meta("0077 2 2 1 1 0.5").unwrap();
        assert_eq!((m.id, m.cause_col, m.effect_col), (77, 2, 1));
        assert!(matches!(parse_meta("0001 1 3 4 4 1"), Err(Error::Unsupported(_))));
        assert!(matches!(parse_meta("0001 1 1 2"), Err(Error::Parse { .. })));
        assert!(matches!(parse_meta("x 1 1 2 2 1"), Err(Error::Parse { .. })));
    }

    #[test]
    fn table_parsing() {
        let (cols, rows, dropped) = parse_table("1 2\n3 4\n", Path::new("t")).unwrap();
        assert_eq!(cols, vec![vec![1.0, 3.0], vec![2.0, 4.0]]);
        assert_eq!((rows, dropped), (2, 0));
        let (cols, rows, dropped) = parse_table("1 2\nnan 4\n\n5 6e-1\n", Path::new("t")).unwrap();
        assert_eq!(cols[1], vec![2.0, 0.6]);
        assert_eq!((rows, dropped), (3, 1));
        match parse_table("1 2\n3\n", Path::new("t")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("row 2"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_table("1 a\n", Path::new("t")),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse_table("\n\n", Path::new("t")), Err(Error::Parse { .. })));
    }

    fn days_pair(n: usize) -> CauseEffectPair {
        let x: Vec<f64> = (1..=n).map(|d| d as f64).collect();
        let y: Vec<f64> = x.iter().map(|d| d * 0.1).collect();
        CauseEffectPair {
            id: 1,
            raw_columns: vec![x.clone(), y.clone()],
            x,
            y,
            meta: PairMeta::two_column(1),
            rows_in: n,
            rows_dropped: 0,
        }
    }

    #[test]
    fn day_windows() {
        let p = days_pair(365);
        let s = restrict_days(&p, Restriction::SummerWindow).unwrap();
        assert_eq!(s.n(), 183);
        assert_eq!((s.x[0], s.x[182]), (91.0, 273.0));
        assert_eq!(s.raw_columns[1].len(), 183);
        let f = restrict_days(&p, Restriction::First183).unwrap();
        assert_eq!(f.x, (1..=183).map(|d| d as f64).collect::<Vec<_>>());
        assert_eq!(restrict_days(&p, Restriction::None).unwrap(), p);
        let early = days_pair(60);
        assert!(restrict_days(&early, Restriction::SummerWindow).is_err());
    }

    #[test]
    fn restriction_names() {
        for r in [Restriction::None, Restriction::SummerWindow, Restriction::First183] {
            assert_eq!(r.as_str().parse::<Restriction>().unwrap(), r);
        }
        assert!("winter".parse::<Restriction>().is_err());
    }
}
