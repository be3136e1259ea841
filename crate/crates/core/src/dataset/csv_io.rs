use std::io::{Read, Write};
use std::path::Path;

use super::{DatasetError, Domain, FeatureSchema, Row, SecretFeature, TraceDataset};

const SECRET_PREFIX: &str = "s_";
const PUBLIC_PREFIX: &str = "p_";
const TIME_COLUMN: &str = "time";

pub fn load_csv(path: impl AsRef<Path>) -> Result<TraceDataset, DatasetError> {
    read_csv(std::fs::File::open(path)?, None)
}

/// Loads a trace CSV whose secret domains come from an authoritative sidecar
/// schema instead of being inferred.
pub fn load_csv_with_schema(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
) -> Result<TraceDataset, DatasetError> {
    read_csv(std::fs::File::open(path)?, Some(schema))
}

/// Parses trace CSV text. Secret domains are inferred from the observed
/// values unless `sidecar` is given.
pub fn read_csv<R: Read>(
    reader: R,
    sidecar: Option<&FeatureSchema>,
) -> Result<TraceDataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.last().map(String::as_str) != Some(TIME_COLUMN) {
        return Err(DatasetError::MissingTimeColumn);
    }

    let mut secret_cols = Vec::new();
    let mut public_cols = Vec::new();
    for (i, col) in header[..header.len() - 1].iter().enumerate() {
        if let Some(name) = col.strip_prefix(SECRET_PREFIX) {
            secret_cols.push((i, name.to_string()));
        } else if let Some(name) = col.strip_prefix(PUBLIC_PREFIX) {
            public_cols.push((i, name.to_string()));
        } else {
            return Err(DatasetError::UnknownColumn(col.clone()));
        }
    }

    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(DatasetError::RowShape {
                expected: header.len(),
                got: record.len(),
            });
        }
        let cell = |c: usize| -> Result<f64, DatasetError> {
            record[c]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::NonNumericCell {
                    row: r,
                    col: header[c].clone(),
                })
        };
        let x = secret_cols
            .iter()
            .map(|(c, _)| cell(*c))
            .collect::<Result<Vec<_>, _>>()?;
        let y = public_cols
            .iter()
            .map(|(c, _)| cell(*c))
            .collect::<Result<Vec<_>, _>>()?;
        let t = cell(header.len() - 1)?;
        rows.push(Row { x, y, t });
    }

    let schema = match sidecar {
        Some(s) => {
            check_sidecar(s, &secret_cols, &public_cols)?;
            s.clone()
        }
        None => infer_schema(&rows, &secret_cols, &public_cols)?,
    };
    TraceDataset::new(schema, rows)
}

fn check_sidecar(
    schema: &FeatureSchema,
    secret_cols: &[(usize, String)],
    public_cols: &[(usize, String)],
) -> Result<(), DatasetError> {
    let strip = |n: &str, p: &str| n.strip_prefix(p).unwrap_or(n).to_string();
    let sec: Vec<String> = schema.secret.iter().map(|f| strip(&f.name, SECRET_PREFIX)).collect();
    let publ: Vec<String> = schema.public.iter().map(|n| strip(n, PUBLIC_PREFIX)).collect();
    let want_sec: Vec<&String> = secret_cols.iter().map(|(_, n)| n).collect();
    let want_pub: Vec<&String> = public_cols.iter().map(|(_, n)| n).collect();
    if sec.iter().collect::<Vec<_>>() != want_sec {
        return Err(DatasetError::SchemaMismatch(format!(
            "secret features {sec:?} vs header {want_sec:?}"
        )));
    }
    if publ.iter().collect::<Vec<_>>() != want_pub {
        return Err(DatasetError::SchemaMismatch(format!(
            "public features {publ:?} vs header {want_pub:?}"
        )));
    }
    Ok(())
}

fn infer_schema(
    rows: &[Row],
    secret_cols: &[(usize, String)],
    public_cols: &[(usize, String)],
) -> Result<FeatureSchema, DatasetError> {
    let mut secret = Vec::with_capacity(secret_cols.len());
    for (j, (_, name)) in secret_cols.iter().enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (r, row) in rows.iter().enumerate() {
            let v = row.x[j];
            if v.fract() != 0.0 {
                return Err(DatasetError::SecretValueOutOfDomain {
                    row: r,
                    col: format!("{SECRET_PREFIX}{name}"),
                    value: v,
                });
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let domain = if rows.is_empty() || (lo >= 0.0 && hi <= 1.0) {
            Domain::Binary
        } else {
            Domain::int(lo as i64, hi as i64)
        };
        secret.push(SecretFeature {
            name: name.clone(),
            domain,
        });
    }
    FeatureSchema::new(
        secret,
        public_cols.iter().map(|(_, n)| n.clone()).collect(),
        "seconds",
    )
}

pub fn write_csv<W: Write>(ds: &TraceDataset, writer: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = ds
        .schema
        .secret
        .iter()
        .map(|f| format!("{SECRET_PREFIX}{}", f.name))
        .chain(ds.schema.public.iter().map(|n| format!("{PUBLIC_PREFIX}{n}")))
        .chain(std::iter::once(TIME_COLUMN.to_string()))
        .collect();
    w.write_record(&header)?;
    for row in &ds.rows {
        let cells: Vec<String> = row
            .x
            .iter()
            .chain(&row.y)
            .chain(std::iter::once(&row.t))
            .map(|v| v.to_string())
            .collect();
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_binary_secrets_and_public() {
        let text = "s_0,s_1,p_0,time\n0,1,5,3.2\n1,1,5,7.9\n";
        let ds = read_csv(text.as_bytes(), None).unwrap();
        assert_eq!(ds.schema.n_secret(), 2);
        assert_eq!(ds.schema.n_public(), 1);
        assert_eq!(ds.len(), 2);
        assert!(ds.schema.secret.iter().all(|f| f.domain == Domain::Binary));
        assert_eq!(ds.rows[1].t, 7.9);
    }

    #[test]
    fn infers_int_range() {
        let text = "s_a,s_b,time\n0,-3,1\n1,0,1\n1,7,1\n0,0,1\n";
        let ds = read_csv(text.as_bytes(), None).unwrap();
        assert_eq!(ds.schema.secret[0].domain, Domain::Binary);
        assert_eq!(ds.schema.secret[1].domain, Domain::int(-3, 7));
    }

    #[test]
    fn missing_time_column() {
        let err = read_csv("s_0,p_0\n1,2\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, DatasetError::MissingTimeColumn));
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        let err = read_csv("s_0,p_0,time\n1,2,3\n0,x,4\n".as_bytes(), None).unwrap_err();
        match err {
            DatasetError::NonNumericCell { row, col } => {
                assert_eq!(row, 1);
                assert_eq!(col, "p_0");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn sidecar_overrides_inference_and_is_enforced() {
        let schema = FeatureSchema::from_json(
            r#"{"secret":[{"name":"t","domain":{"int":[-10,10]}}],"public":["n"],"time_unit":"s"}"#,
        )
        .unwrap();
        let ok = read_csv("s_t,p_n,time\n0,1,2\n1,1,2\n".as_bytes(), Some(&schema)).unwrap();
        assert_eq!(ok.schema.secret[0].domain, Domain::int(-10, 10));

        let err = read_csv("s_t,p_n,time\n11,1,2\n".as_bytes(), Some(&schema)).unwrap_err();
        assert!(matches!(err, DatasetError::SecretValueOutOfDomain { .. }));
    }

    #[test]
    fn write_then_read_round_trips() {
        let text = "s_0,s_k,p_0,time\n0,3,5,3.25\n1,-2,5,7.5\n";
        let ds = read_csv(text.as_bytes(), None).unwrap();
        let mut out = Vec::new();
        write_csv(&ds, &mut out).unwrap();
        let back = read_csv(out.as_slice(), Some(&ds.schema)).unwrap();
        assert_eq!(back, ds);
    }
}
