use std::fs::File;
use std::io::Read;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use permrate::{Obs, Sample};
use serde::{Deserialize, Serialize};

/// Which CSV columns feed the sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub x: String,
    /// Not needed for density problems.
    pub y: Option<String>,
    /// Denominator outcome for ratio targets.
    pub d: Option<String>,
    /// Two-valued group column. Numeric labels map in increasing order to
    /// samples 1 and 2, other labels in lexicographic order.
    pub group: Option<String>,
}

impl ColumnMap {
    pub fn xy(x: &str, y: &str) -> ColumnMap {
        ColumnMap { x: x.into(), y: Some(y.into()), d: None, group: None }
    }
}

pub fn ingest(path: &Path, map: &ColumnMap) -> Result<Sample> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    ingest_reader(file, map).with_context(|| format!("reading {}", path.display()))
}

pub fn ingest_reader<R: Read>(reader: R, map: &ColumnMap) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().context("cannot read the header row")?.clone();
    if headers.is_empty() {
        bail!("empty file: no header row");
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("missing column '{name}' (header has: {})", headers.iter().collect::<Vec<_>>().join(", ")))
    };
    let cx = column(&map.x)?;
    let cy = map.y.as_deref().map(column).transpose()?;
    let cd = map.d.as_deref().map(column).transpose()?;
    let cg = map.group.as_deref().map(column).transpose()?;

    let mut obs = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.context("malformed CSV record")?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |idx: usize, name: &str| -> Result<f64> {
            let cell = rec.get(idx).unwrap_or("");
            if cell.is_empty() {
                bail!("line {line}: missing value in column '{name}'");
            }
            let v: f64 = cell.parse().map_err(|_| anyhow!("line {line}, column '{name}': cannot parse '{cell}' as a number"))?;
            if !v.is_finite() {
                bail!("line {line}, column '{name}': value '{cell}' is not finite");
            }
            Ok(v)
        };
        let x = num(cx, &map.x)?;
        let y = match cy {
            Some(c) => num(c, map.y.as_deref().unwrap())?,
            None => 0.0,
        };
        let d = match cd {
            Some(c) => num(c, map.d.as_deref().unwrap())?,
            None => 0.0,
        };
        if let Some(c) = cg {
            let g = rec.get(c).unwrap_or("");
            if g.is_empty() {
                bail!("line {line}: missing value in column '{}'", map.group.as_deref().unwrap());
            }
            labels.push(g.to_string());
        }
        obs.push(Obs::with_d(x, y, d));
    }
    if obs.is_empty() {
        bail!("no data rows after the header");
    }
    if cg.is_none() {
        return Ok(Sample::new(obs));
    }
    let mut distinct = labels.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.len() != 2 {
        bail!("group column '{}' must have exactly two distinct values, found {}", map.group.as_deref().unwrap(), distinct.len());
    }
    let numeric: Option<Vec<f64>> = distinct.iter().map(|s| s.parse().ok()).collect();
    if let Some(v) = numeric {
        if v[1] < v[0] {
            distinct.swap(0, 1);
        }
    }
    let group = labels.iter().map(|l| if *l == distinct[0] { 1 } else { 2 }).collect();
    Ok(Sample::with_groups(obs, group))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, map: &ColumnMap) -> Result<Sample> {
        ingest_reader(text.as_bytes(), map)
    }

    #[test]
    fn well_formed() {
        let s = read("x,y\n1,2\n3,4\n5,6\n", &ColumnMap::xy("x", "y")).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.obs[2], Obs::new(5.0, 6.0));
        assert!(s.group.is_none());
    }

    #[test]
    fn missing_column_is_named() {
        let e = read("x,z\n1,2\n", &ColumnMap::xy("x", "y")).unwrap_err();
        assert!(e.to_string().contains("'y'"), "{e}");
    }

    #[test]
    fn bad_cell_cites_line() {
        let text = "x,y\n1,1\n2,2\n3,3\n4,4\n5,5\n6,abc\n7,7\n";
        let e = read(text, &ColumnMap::xy("x", "y")).unwrap_err();
        assert!(e.to_string().contains("line 7"), "{e}");
        let e = read("x,y\n1,\n", &ColumnMap::xy("x", "y")).unwrap_err();
        assert!(e.to_string().contains("line 2") && e.to_string().contains("missing"), "{e}");
    }

    #[test]
    fn empty_inputs() {
        assert!(read("", &ColumnMap::xy("x", "y")).is_err());
        assert!(read("x,y\n", &ColumnMap::xy("x", "y")).unwrap_err().to_string().contains("no data"));
    }

    #[test]
    fn groups_and_optional_columns() {
        let map = ColumnMap { x: "x".into(), y: Some("y".into()), d: Some("d".into()), group: Some("g".into()) };
        let s = read("x,y,d,g\n1,2,3,10\n4,5,6,2\n7,8,9,10\n", &map).unwrap();
        assert_eq!(s.group.unwrap(), vec![2, 1, 2]);
        assert_eq!(s.obs[1].d, 6.0);
        let map = ColumnMap { x: "x".into(), y: None, d: None, group: None };
        assert_eq!(read("x\n0.5\n-0.5\n", &map).unwrap().len(), 2);
        let map = ColumnMap { group: Some("g".into()), ..ColumnMap::xy("x", "y") };
        assert!(read("x,y,g\n1,2,a\n1,2,b\n1,2,c\n", &map).is_err());
    }
}
