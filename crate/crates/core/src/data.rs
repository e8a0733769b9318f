//! Categorical data sets with missing entries, possible paths and count tables.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trees::{EventTree, PathId, Staging, StageId, VariableSpec, VertexId};

/// One observation: a level index per variable, `None` where missing.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sample {
    pub values: Vec<Option<usize>>,
}

impl Sample {
    pub fn new(values: Vec<Option<usize>>) -> Self {
        Self { values }
    }

    pub fn complete(values: &[usize]) -> Self {
        Self { values: values.iter().map(|&v| Some(v)).collect() }
    }

    /// `true` at positions whose value is missing.
    pub fn missing_mask(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_none).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn num_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

/// Where a data set was read from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Origin {
    pub path: PathBuf,
    pub na_token: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    spec: VariableSpec,
    rows: Vec<Sample>,
    pub origin: Option<Origin>,
}

impl DataSet {
    pub fn new(spec: VariableSpec, rows: Vec<Sample>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.values.len() != spec.len() {
                return Err(Error::Parse {
                    row: i,
                    column: String::new(),
                    message: format!("{} values, expected {}", row.values.len(), spec.len()),
                });
            }
            for (d, v) in row.values.iter().enumerate() {
                if let Some(l) = v {
                    if *l >= spec.level_count(d) {
                        return Err(Error::Parse {
                            row: i,
                            column: spec.name(d).to_string(),
                            message: format!("level index {l} out of range"),
                        });
                    }
                }
            }
        }
        Ok(Self { spec, rows, origin: None })
    }

    pub fn spec(&self) -> &VariableSpec {
        &self.spec
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(Sample::is_complete)
    }

    pub fn num_complete_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.is_complete()).count()
    }

    /// The subset of rows without missing entries, in original order.
    pub fn complete_rows(&self) -> DataSet {
        Self {
            spec: self.spec.clone(),
            rows: self.rows.iter().filter(|r| r.is_complete()).cloned().collect(),
            origin: self.origin.clone(),
        }
    }

    /// Columns rearranged so that new column `i` is old column `order[i]`.
    pub fn reordered(&self, order: &[usize]) -> Result<DataSet> {
        let spec = self.spec.reordered(order)?;
        let rows = self
            .rows
            .iter()
            .map(|r| Sample::new(order.iter().map(|&i| r.values[i]).collect()))
            .collect();
        Ok(Self { spec, rows, origin: self.origin.clone() })
    }

    pub fn write_csv<W: Write>(&self, writer: W, na_token: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.spec.names())?;
        for row in &self.rows {
            w.write_record(row.values.iter().enumerate().map(|(d, v)| match v {
                Some(l) => self.spec.levels(d)[*l].as_str(),
                None => na_token,
            }))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>, na_token: &str) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f), na_token)
    }
}

/// CSV reading options.
#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub na_token: String,
    pub empty_is_missing: bool,
    /// When given, columns are matched by name and cells must be known levels.
    pub spec: Option<VariableSpec>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { na_token: "NA".into(), empty_is_missing: true, spec: None }
    }
}

pub fn read_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<DataSet> {
    let path = path.as_ref();
    let f = std::fs::File::open(path)?;
    let mut data = read_csv_from(f, options)?;
    data.origin = Some(Origin { path: path.to_path_buf(), na_token: options.na_token.clone() });
    Ok(data)
}

pub fn read_csv_from<R: Read>(reader: R, options: &CsvOptions) -> Result<DataSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyData);
    }
    let is_missing = |cell: &str| cell == options.na_token || (options.empty_is_missing && cell.is_empty());

    let mut raw: Vec<Vec<Option<String>>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row: i,
                column: String::new(),
                message: format!("{} fields, header has {}", rec.len(), header.len()),
            });
        }
        raw.push(rec.iter().map(|c| (!is_missing(c)).then(|| c.to_string())).collect());
    }
    if raw.is_empty() {
        return Err(Error::EmptyData);
    }

    let (spec, column_of_var) = match &options.spec {
        Some(spec) => {
            let mut cols = Vec::with_capacity(spec.len());
            for name in spec.names() {
                let c = header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                    row: 0,
                    column: name.clone(),
                    message: "column missing from header".into(),
                })?;
                cols.push(c);
            }
            if header.len() != spec.len() {
                return Err(Error::Parse {
                    row: 0,
                    column: String::new(),
                    message: format!("header has {} columns, spec has {}", header.len(), spec.len()),
                });
            }
            (spec.clone(), cols)
        }
        None => {
            let mut levels: Vec<Vec<String>> = vec![Vec::new(); header.len()];
            for row in &raw {
                for (c, cell) in row.iter().enumerate() {
                    if let Some(v) = cell {
                        if !levels[c].contains(v) {
                            levels[c].push(v.clone());
                        }
                    }
                }
            }
            (VariableSpec::new(header.clone(), levels)?, (0..header.len()).collect())
        }
    };

    let mut rows = Vec::with_capacity(raw.len());
    for (i, row) in raw.iter().enumerate() {
        let mut values = Vec::with_capacity(spec.len());
        for (d, &c) in column_of_var.iter().enumerate() {
            match &row[c] {
                None => values.push(None),
                Some(cell) => {
                    let l = spec.level_index(d, cell).ok_or_else(|| Error::Parse {
                        row: i,
                        column: spec.name(d).to_string(),
                        message: format!("unknown category `{cell}`"),
                    })?;
                    values.push(Some(l));
                }
            }
        }
        rows.push(Sample::new(values));
    }
    DataSet::new(spec, rows)
}

/// Root-to-leaf paths consistent with a sample's observed values (sorted ids).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PossiblePathSet {
    pub paths: Vec<PathId>,
}

impl PossiblePathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.paths.len() == 1
    }
}

/// Paths matching every observed label of `x`; missing positions are free.
///
/// Depth `i` edges are matched against the label of variable `i`. Only paths
/// with exactly one edge per variable are considered.
pub fn possible_paths(tree: &EventTree, spec: &VariableSpec, x: &Sample) -> Result<PossiblePathSet> {
    if x.values.len() != spec.len() {
        return Err(Error::InconsistentSample(format!(
            "sample has {} values, spec has {} variables",
            x.values.len(),
            spec.len()
        )));
    }
    let mut out = Vec::new();
    let mut stack: Vec<VertexId> = vec![tree.root()];
    let k = spec.len();
    while let Some(v) = stack.pop() {
        let d = tree.depth(v);
        if !tree.is_situation(v) {
            if d == k {
                out.push(tree.path_of_leaf(v).unwrap());
            }
            continue;
        }
        if d >= k {
            continue;
        }
        match x.values[d] {
            Some(l) => {
                let label = spec.levels(d).get(l).ok_or_else(|| {
                    Error::InconsistentSample(format!("level index {l} out of range at depth {d}"))
                })?;
                if let Some(c) = tree.child_with_label(v, label) {
                    stack.push(c);
                }
            }
            None => stack.extend(tree.children(v).iter().rev()),
        }
    }
    if out.is_empty() {
        return Err(Error::InconsistentSample(format!("no path matches {:?}", x.values)));
    }
    out.sort_unstable();
    Ok(PossiblePathSet { paths: out })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Group {
    pub paths: PossiblePathSet,
    pub count: usize,
}

/// Rows collected by their possible-path set, groups in lexicographic path order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupedCounts {
    pub groups: Vec<Group>,
    /// Indices of groups whose path set is a single path.
    pub singleton: Vec<usize>,
    pub total: usize,
    /// Group index of each input row.
    #[serde(skip)]
    pub row_group: Vec<usize>,
}

impl GroupedCounts {
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn singleton_total(&self) -> usize {
        self.singleton.iter().map(|&g| self.groups[g].count).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.singleton.len() == self.groups.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn group_counts(tree: &EventTree, data: &DataSet) -> Result<GroupedCounts> {
    // Resolve each distinct row pattern once.
    let mut pattern_paths: HashMap<&Sample, PossiblePathSet> = HashMap::new();
    let mut by_set: BTreeMap<PossiblePathSet, usize> = BTreeMap::new();
    for row in data.rows() {
        if !pattern_paths.contains_key(row) {
            pattern_paths.insert(row, possible_paths(tree, data.spec(), row)?);
        }
        *by_set.entry(pattern_paths[row].clone()).or_insert(0) += 1;
    }
    let index: HashMap<&PossiblePathSet, usize> = by_set.keys().enumerate().map(|(i, k)| (k, i)).collect();
    let row_group = data.rows().iter().map(|r| index[&pattern_paths[r]]).collect();
    let groups: Vec<Group> = by_set
        .iter()
        .map(|(paths, &count)| Group { paths: paths.clone(), count })
        .collect();
    let singleton = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.paths.is_singleton())
        .map(|(i, _)| i)
        .collect();
    Ok(GroupedCounts { groups, singleton, total: data.len(), row_group })
}

/// Real-valued per-stage edge counts, slot-aligned with each stage's labels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeCounts {
    pub counts: Vec<Vec<f64>>,
}

impl EdgeCounts {
    pub fn zeros(tree: &EventTree, staging: &Staging) -> Self {
        let counts = (0..staging.num_stages())
            .map(|s| vec![0.0; tree.labels_of(staging.representative(s)).len()])
            .collect();
        Self { counts }
    }

    pub fn stage(&self, s: StageId) -> &[f64] {
        &self.counts[s]
    }

    pub fn stage_total(&self, s: StageId) -> f64 {
        self.counts[s].iter().sum()
    }
}

/// Aggregates (possibly fractional) path counts into per-stage edge counts.
pub fn complete_edge_counts(tree: &EventTree, staging: &Staging, path_counts: &[f64]) -> Result<EdgeCounts> {
    if path_counts.len() != tree.num_paths() {
        return Err(Error::InvalidArgument(format!(
            "{} path counts for {} paths",
            path_counts.len(),
            tree.num_paths()
        )));
    }
    if path_counts.iter().any(|&c| c < 0.0 || !c.is_finite()) {
        return Err(Error::InvalidArgument("path counts must be finite and nonnegative".into()));
    }
    let mut out = EdgeCounts::zeros(tree, staging);
    for (p, &c) in path_counts.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for &v in &tree.path(p)[1..] {
            let s = staging.stage_of(tree.parent(v).unwrap()).unwrap();
            out.counts[s][tree.slot(v)] += c;
        }
    }
    Ok(out)
}

/// Integer path counts of a complete data set.
pub fn path_counts(tree: &EventTree, data: &DataSet) -> Result<Vec<f64>> {
    if !data.is_complete() {
        return Err(Error::MissingValues);
    }
    let grouped = group_counts(tree, data)?;
    let mut counts = vec![0.0; tree.num_paths()];
    for g in &grouped.groups {
        counts[g.paths.paths[0]] += g.count as f64;
    }
    Ok(counts)
}

pub fn complete_edge_counts_from_data(tree: &EventTree, staging: &Staging, data: &DataSet) -> Result<EdgeCounts> {
    complete_edge_counts(tree, staging, &path_counts(tree, data)?)
}

/// Level indices of the completion corresponding to an X-compatible path.
pub fn path_to_levels(tree: &EventTree, spec: &VariableSpec, path: PathId) -> Result<Vec<usize>> {
    tree.path_labels(path)
        .iter()
        .enumerate()
        .map(|(d, lab)| {
            spec.level_index(d, lab).ok_or_else(|| {
                Error::InconsistentSample(format!("path label `{lab}` is not a level of variable {d}"))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{build_event_tree, saturated_staging};

    fn bin(k: usize) -> VariableSpec {
        let names = (0..k).map(|i| format!("X{i}")).collect();
        let levels = (0..k).map(|_| vec!["a".to_string(), "b".to_string()]).collect();
        VariableSpec::new(names, levels).unwrap()
    }

    #[test]
    fn csv_na_cell_is_missing() {
        let data = read_csv_from("A,B,C\na,NA,b\nc,d,b\na,e,f\n".as_bytes(), &CsvOptions::default()).unwrap();
        assert_eq!(data.rows()[0].missing_mask(), vec![false, true, false]);
        assert_eq!(data.spec().levels(0), &["a", "c"]);
    }

    #[test]
    fn csv_without_missing() {
        let data = read_csv_from("A,B\nx,y\ny,x\n".as_bytes(), &CsvOptions::default()).unwrap();
        assert!(data.rows().iter().all(|r| r.missing_mask().iter().all(|m| !m)));
    }

    #[test]
    fn csv_unknown_category_names_row_and_column() {
        let spec = VariableSpec::from_strs(&[("Q", &["yes", "no"])]).unwrap();
        let opts = CsvOptions { spec: Some(spec), ..Default::default() };
        let err = read_csv_from("Q\nyes\nmaybe\n".as_bytes(), &opts).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "Q");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_empty_is_error() {
        assert!(read_csv_from("".as_bytes(), &CsvOptions::default()).is_err());
        assert!(matches!(
            read_csv_from("A,B\n".as_bytes(), &CsvOptions::default()),
            Err(Error::EmptyData)
        ));
    }

    #[test]
    fn csv_empty_cell_and_quoting() {
        let data = read_csv_from("A,B\n\"x,1\",\nz,w\nz,v\n".as_bytes(), &CsvOptions::default()).unwrap();
        assert_eq!(data.spec().levels(0)[0], "x,1");
        assert_eq!(data.rows()[0].values[1], None);
    }

    #[test]
    fn csv_round_trip() {
        let data = read_csv_from("A,B\nx,NA\ny,w\nx,v\n".as_bytes(), &CsvOptions::default()).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf, "NA").unwrap();
        let back = read_csv_from(buf.as_slice(), &CsvOptions::default()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn icu_possible_paths() {
        // v0 -ICU No-> v1, v0 -ICU Yes-> v2; v1 -Int Yes-> v3, v1 -Int No-> v4;
        // v2, v3, v4 each have Died Yes/No leaves.
        let tree = EventTree::from_edges(
            11,
            &[
                (0, 1, "No"),
                (0, 2, "Yes"),
                (1, 3, "Yes"),
                (1, 4, "No"),
                (2, 5, "Yes"),
                (2, 6, "No"),
                (3, 7, "Yes"),
                (3, 8, "No"),
                (4, 9, "Yes"),
                (4, 10, "No"),
            ],
        )
        .unwrap();
        let spec = VariableSpec::from_strs(&[
            ("ICU", &["No", "Yes"]),
            ("Intubated", &["Yes", "No"]),
            ("Died", &["Yes", "No"]),
        ])
        .unwrap();
        let x = Sample::new(vec![Some(0), None, Some(1)]);
        let set = possible_paths(&tree, &spec, &x).unwrap();
        assert_eq!(set.len(), 2);
        for &p in &set.paths {
            let verts = tree.path(p);
            assert_eq!(verts[1], 1);
            assert!(verts[2] == 3 || verts[2] == 4);
            assert_eq!(tree.edge_label(verts[3]), "No");
        }
        // A three-value sample cannot follow the two-edge ICU = Yes branch.
        let y = Sample::new(vec![Some(1), None, Some(0)]);
        assert!(matches!(possible_paths(&tree, &spec, &y), Err(Error::InconsistentSample(_))));
    }

    #[test]
    fn possible_path_counts() {
        let spec = bin(3);
        let t = build_event_tree(&spec).unwrap();
        let full = possible_paths(&t, &spec, &Sample::complete(&[1, 0, 1])).unwrap();
        assert_eq!(full.paths, vec![5]);
        let none = possible_paths(&t, &spec, &Sample::new(vec![None, None, None])).unwrap();
        assert_eq!(none.paths, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn grouping() {
        let spec = bin(2);
        let t = build_event_tree(&spec).unwrap();
        let d = DataSet::new(spec.clone(), vec![Sample::complete(&[0, 1]); 5]).unwrap();
        let g = group_counts(&t, &d).unwrap();
        assert_eq!(g.num_groups(), 1);
        assert_eq!(g.groups[0].count, 5);
        assert!(g.groups[0].paths.is_singleton());

        let d = DataSet::new(spec, vec![Sample::complete(&[0, 1]), Sample::new(vec![Some(0), None])]).unwrap();
        let g = group_counts(&t, &d).unwrap();
        let mut sizes: Vec<(usize, usize)> = g.groups.iter().map(|g| (g.count, g.paths.len())).collect();
        sizes.sort();
        assert_eq!(sizes, vec![(1, 1), (1, 2)]);
        assert_eq!(g.singleton.len(), 1);
        println!("{}", g.to_json().unwrap());
    }

    #[test]
    fn edge_counts_single_path() {
        let spec = bin(2);
        let t = build_event_tree(&spec).unwrap();
        let s = saturated_staging(&t);
        let d = DataSet::new(spec, vec![Sample::complete(&[1, 0]); 4]).unwrap();
        let c = complete_edge_counts_from_data(&t, &s, &d).unwrap();
        assert_eq!(c.stage(s.stage_of(0).unwrap()), &[0.0, 4.0]);
        assert_eq!(c.stage(s.stage_of(2).unwrap()), &[4.0, 0.0]);
        assert_eq!(c.stage_total(s.stage_of(1).unwrap()), 0.0);
    }

    #[test]
    fn edge_counts_fractional_and_pooled() {
        let spec = bin(2);
        let t = build_event_tree(&spec).unwrap();
        let s = saturated_staging(&t);
        let c = complete_edge_counts(&t, &s, &[0.75, 0.25, 0.0, 0.0]).unwrap();
        assert_eq!(c.stage(0), &[1.0, 0.0]);

        // Situations 1 and 2 pooled; 3 traversals of label "a" each.
        let pooled = Staging::from_partition(&t, vec![vec![0], vec![1, 2]]).unwrap();
        let c = complete_edge_counts(&t, &pooled, &[3.0, 0.0, 3.0, 0.0]).unwrap();
        assert_eq!(c.stage(1), &[6.0, 0.0]);
    }

    #[test]
    fn missing_rows_rejected_for_complete_counts() {
        let spec = bin(2);
        let t = build_event_tree(&spec).unwrap();
        let s = saturated_staging(&t);
        let d = DataSet::new(spec, vec![Sample::new(vec![None, Some(0)])]).unwrap();
        assert!(matches!(complete_edge_counts_from_data(&t, &s, &d), Err(Error::MissingValues)));
    }
}
