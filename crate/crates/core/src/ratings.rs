//! Rating ingestion, the compressed sparse user-item matrix, and dense fills.
//!
//! Raw user and item ids are opaque strings. Dense indices are assigned in
//! first-appearance order so that the same file always yields the same
//! matrix, bit for bit.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Closed interval of valid ratings, e.g. `[1, 5]` stars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl RatingScale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::NonFinite("rating scale"));
        }
        if min >= max {
            return Err(Error::invalid(format!("rating scale needs min < max, got [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    /// Maps a rating onto `[0, 1]`.
    pub fn to_unit(&self, value: f64) -> Result<f64> {
        if !self.contains(value) {
            return Err(Error::Range { value, domain: format!("scale [{}, {}]", self.min, self.max) });
        }
        Ok((value - self.min) / self.width())
    }

    /// Inverse of [`RatingScale::to_unit`].
    pub fn from_unit(&self, value: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Range { value, domain: "unit interval [0, 1]".into() });
        }
        Ok(self.min + value * self.width())
    }
}

impl Default for RatingScale {
    fn default() -> Self {
        Self { min: 1.0, max: 5.0 }
    }
}

impl FromStr for RatingScale {
    type Err = Error;

    /// Parses `MIN:MAX`.
    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s.split_once(':').ok_or_else(|| Error::invalid(format!("scale {s:?} is not MIN:MAX")))?;
        let parse =
            |t: &str| t.trim().parse::<f64>().map_err(|_| Error::invalid(format!("scale bound {t:?} is not a number")));
        RatingScale::new(parse(lo)?, parse(hi)?)
    }
}

impl fmt::Display for RatingScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RescaleDirection {
    ToUnit,
    FromUnit,
}

pub fn rescale(value: f64, scale: RatingScale, direction: RescaleDirection) -> Result<f64> {
    match direction {
        RescaleDirection::ToUnit => scale.to_unit(value),
        RescaleDirection::FromUnit => scale.from_unit(value),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingTriple {
    pub user: String,
    pub item: String,
    pub rating: f64,
    /// Carried through from the input; no algorithm reads it.
    pub timestamp: Option<i64>,
}

impl RatingTriple {
    pub fn new(user: impl Into<String>, item: impl Into<String>, rating: f64) -> Self {
        Self { user: user.into(), item: item.into(), rating, timestamp: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// `user<TAB>item<TAB>rating[<TAB>timestamp]`, no header (MovieLens `u.data`).
    Tsv,
    /// Header `user,item,rating[,timestamp]`.
    Csv,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(InputFormat::Tsv),
            "csv" => Ok(InputFormat::Csv),
            other => Err(Error::invalid(format!("unknown input format {other:?}"))),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::Tsv => "tsv",
            InputFormat::Csv => "csv",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutOfRangePolicy {
    #[default]
    Error,
    Clamp,
}

impl FromStr for OutOfRangePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(Self::Error),
            "clamp" => Ok(Self::Clamp),
            other => Err(Error::invalid(format!("unknown out-of-range policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DuplicatePolicy {
    #[default]
    Error,
    Mean,
    Last,
}

impl FromStr for DuplicatePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(Self::Error),
            "mean" => Ok(Self::Mean),
            "last" => Ok(Self::Last),
            other => Err(Error::invalid(format!("unknown duplicate policy {other:?}"))),
        }
    }
}

/// Reads rating triples in file order.
///
/// Extra columns beyond the timestamp are ignored. Line numbers in errors are
/// 1-based and count the CSV header.
pub fn load_ratings<R: Read>(
    source: R,
    format: InputFormat,
    scale: RatingScale,
    on_out_of_range: OutOfRangePolicy,
) -> Result<Vec<RatingTriple>> {
    let delimiter = match format {
        InputFormat::Tsv => b'\t',
        InputFormat::Csv => b',',
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .quoting(format == InputFormat::Csv)
        .from_reader(source);

    let mut triples = Vec::new();
    let mut expect_header = format == InputFormat::Csv;
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse { line, message: e.to_string() }
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        if expect_header {
            expect_header = false;
            check_header(&record, line)?;
            continue;
        }
        triples.push(parse_record(&record, line, scale, on_out_of_range)?);
    }
    Ok(triples)
}

fn check_header(record: &csv::StringRecord, line: u64) -> Result<()> {
    let names: Vec<String> = record.iter().take(3).map(|f| f.trim().to_ascii_lowercase()).collect();
    if names != ["user", "item", "rating"] {
        return Err(Error::Parse {
            line,
            message: format!(
                "expected header starting with user,item,rating, found {:?}",
                record.iter().collect::<Vec<_>>()
            ),
        });
    }
    Ok(())
}

fn parse_record(
    record: &csv::StringRecord,
    line: u64,
    scale: RatingScale,
    policy: OutOfRangePolicy,
) -> Result<RatingTriple> {
    let parse_err = |message: String| Error::Parse { line, message };
    if record.len() < 3 {
        return Err(parse_err(format!("expected at least 3 fields, found {}", record.len())));
    }
    let user = record[0].trim();
    let item = record[1].trim();
    if user.is_empty() || item.is_empty() {
        return Err(parse_err("empty user or item id".into()));
    }
    let raw = record[2].trim();
    let rating: f64 = raw.parse().map_err(|_| parse_err(format!("rating {raw:?} is not a number")))?;
    if !rating.is_finite() {
        return Err(parse_err(format!("rating {raw:?} is not finite")));
    }
    let timestamp = match record.get(3).map(str::trim) {
        None | Some("") => None,
        Some(t) => Some(t.parse::<i64>().map_err(|_| parse_err(format!("timestamp {t:?} is not an integer")))?),
    };
    let rating = if scale.contains(rating) {
        rating
    } else {
        match policy {
            OutOfRangePolicy::Clamp => scale.clamp(rating),
            OutOfRangePolicy::Error => return Err(Error::OutOfScale { line, rating, min: scale.min, max: scale.max }),
        }
    };
    Ok(RatingTriple { user: user.to_owned(), item: item.to_owned(), rating, timestamp })
}

/// Bijection between raw external ids and dense indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id_of(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Observed ratings in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRatingMatrix {
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    users: IdMap,
    items: IdMap,
    scale: RatingScale,
}

/// Builds the sparse matrix from triples.
///
/// Every rating must already lie within `scale` (see [`load_ratings`]).
pub fn build_matrix(
    triples: &[RatingTriple],
    scale: RatingScale,
    duplicate_policy: DuplicatePolicy,
) -> Result<SparseRatingMatrix> {
    if triples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut users = IdMap::default();
    let mut items = IdMap::default();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for t in triples {
        if !t.rating.is_finite() {
            return Err(Error::NonFinite("rating"));
        }
        if !scale.contains(t.rating) {
            return Err(Error::Range { value: t.rating, domain: format!("scale [{}, {}]", scale.min, scale.max) });
        }
        let u = users.intern(&t.user);
        let i = items.intern(&t.item);
        if u == rows.len() {
            rows.push(Vec::new());
        }
        rows[u].push((i, t.rating));
    }

    let mut row_offsets = Vec::with_capacity(rows.len() + 1);
    let mut col_indices = Vec::with_capacity(triples.len());
    let mut values = Vec::with_capacity(triples.len());
    row_offsets.push(0);
    for (u, mut row) in rows.into_iter().enumerate() {
        // stable: equal items keep file order, which `Last` relies on
        row.sort_by_key(|&(i, _)| i);
        let mut start = 0;
        while start < row.len() {
            let item = row[start].0;
            let end = start + row[start..].iter().take_while(|e| e.0 == item).count();
            let group = &row[start..end];
            let value = if group.len() == 1 {
                group[0].1
            } else {
                match duplicate_policy {
                    DuplicatePolicy::Error => {
                        return Err(Error::DuplicatePair { user: users.ids[u].clone(), item: items.ids[item].clone() })
                    }
                    DuplicatePolicy::Mean => group.iter().map(|e| e.1).sum::<f64>() / group.len() as f64,
                    DuplicatePolicy::Last => group[group.len() - 1].1,
                }
            };
            col_indices.push(item);
            values.push(value);
            start = end;
        }
        row_offsets.push(col_indices.len());
    }

    Ok(SparseRatingMatrix { row_offsets, col_indices, values, users, items, scale })
}

impl SparseRatingMatrix {
    /// Packs `(user, item, value)` entries over the index spaces of `self`.
    ///
    /// Entries may arrive in any order; duplicates are rejected.
    pub fn with_entries(&self, entries: &[(usize, usize, f64)]) -> Result<SparseRatingMatrix> {
        let mut sorted = entries.to_vec();
        sorted.sort_by_key(|&(u, i, _)| (u, i));
        let mut row_offsets = vec![0; self.n_users() + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        for (k, &(u, i, v)) in sorted.iter().enumerate() {
            if u >= self.n_users() || i >= self.n_items() {
                return Err(Error::IndexOutOfRange {
                    user: u,
                    item: i,
                    n_users: self.n_users(),
                    n_items: self.n_items(),
                });
            }
            if k > 0 && sorted[k - 1].0 == u && sorted[k - 1].1 == i {
                return Err(Error::DuplicatePair { user: self.users.ids[u].clone(), item: self.items.ids[i].clone() });
            }
            if !self.scale.contains(v) {
                return Err(Error::Range {
                    value: v,
                    domain: format!("scale [{}, {}]", self.scale.min, self.scale.max),
                });
            }
            row_offsets[u + 1] += 1;
            col_indices.push(i);
            values.push(v);
        }
        for u in 0..self.n_users() {
            row_offsets[u + 1] += row_offsets[u];
        }
        Ok(SparseRatingMatrix {
            row_offsets,
            col_indices,
            values,
            users: self.users.clone(),
            items: self.items.clone(),
            scale: self.scale,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Items and ratings observed for `user`, items ascending.
    pub fn row(&self, user: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[user]..self.row_offsets[user + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    pub fn get(&self, user: usize, item: usize) -> Option<f64> {
        let (items, values) = self.row(user);
        items.binary_search(&item).ok().map(|k| values[k])
    }

    /// All observed entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_users()).flat_map(move |u| {
            let (items, values) = self.row(u);
            items.iter().zip(values).map(move |(&i, &v)| (u, i, v))
        })
    }

    pub fn global_mean(&self) -> Option<f64> {
        (self.nnz() > 0).then(|| self.values.iter().sum::<f64>() / self.nnz() as f64)
    }

    /// Per-user means; `None` for users without ratings.
    pub fn user_means(&self) -> Vec<Option<f64>> {
        (0..self.n_users())
            .map(|u| {
                let (_, values) = self.row(u);
                (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
            })
            .collect()
    }

    /// Per-item means; `None` for items without ratings.
    pub fn item_means(&self) -> Vec<Option<f64>> {
        let mut sums = vec![0.0; self.n_items()];
        let mut counts = vec![0usize; self.n_items()];
        for (&i, &v) in self.col_indices.iter().zip(&self.values) {
            sums[i] += v;
            counts[i] += 1;
        }
        sums.into_iter().zip(counts).map(|(s, c)| (c > 0).then(|| s / c as f64)).collect()
    }

    /// SHA-256 over the ids and entries, hex encoded.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for id in self.users.ids() {
            hasher.update(id.as_bytes());
            hasher.update([0u8]);
        }
        hasher.update([1u8]);
        for id in self.items.ids() {
            hasher.update(id.as_bytes());
            hasher.update([0u8]);
        }
        for (u, i, v) in self.iter() {
            hasher.update((u as u64).to_le_bytes());
            hasher.update((i as u64).to_le_bytes());
            hasher.update(v.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// SHA-256 of raw bytes, hex encoded. Used for dataset provenance.
pub fn content_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Value assigned to unobserved cells before dense factorization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FillStrategy {
    GlobalMean,
    UserMean,
    ItemMean,
    Zero,
    Constant(f64),
}

impl FillStrategy {
    /// Stable numeric code used when deriving per-combination seeds.
    pub(crate) fn seed_code(&self) -> u64 {
        match self {
            FillStrategy::GlobalMean => 1,
            FillStrategy::UserMean => 2,
            FillStrategy::ItemMean => 3,
            FillStrategy::Zero => 4,
            FillStrategy::Constant(c) => 5 ^ c.to_bits().rotate_left(7),
        }
    }
}

impl fmt::Display for FillStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FillStrategy::GlobalMean => f.write_str("global_mean"),
            FillStrategy::UserMean => f.write_str("user_mean"),
            FillStrategy::ItemMean => f.write_str("item_mean"),
            FillStrategy::Zero => f.write_str("zero"),
            FillStrategy::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

impl FromStr for FillStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "global_mean" => Ok(FillStrategy::GlobalMean),
            "user_mean" => Ok(FillStrategy::UserMean),
            "item_mean" => Ok(FillStrategy::ItemMean),
            "zero" => Ok(FillStrategy::Zero),
            other => match other.strip_prefix("constant:") {
                Some(v) => v
                    .parse::<f64>()
                    .ok()
                    .filter(|c| c.is_finite())
                    .map(FillStrategy::Constant)
                    .ok_or_else(|| Error::invalid(format!("bad constant fill {other:?}"))),
                None => Err(Error::invalid(format!("unknown fill strategy {other:?}"))),
            },
        }
    }
}

impl TryFrom<String> for FillStrategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FillStrategy> for String {
    fn from(f: FillStrategy) -> String {
        f.to_string()
    }
}

/// Dense `n_users x n_items` view with every unobserved cell filled.
///
/// Observed cells keep their values. Cold users (or items) under
/// `UserMean` (`ItemMean`) get the global mean.
pub fn impute_dense(m: &SparseRatingMatrix, strategy: FillStrategy) -> Result<DenseMatrix> {
    let (n_users, n_items) = (m.n_users(), m.n_items());
    let mut dense = match strategy {
        FillStrategy::Zero => Array2::zeros((n_users, n_items)),
        FillStrategy::Constant(c) => {
            if !m.scale().contains(c) {
                return Err(Error::Range { value: c, domain: format!("scale [{}, {}]", m.scale().min, m.scale().max) });
            }
            Array2::from_elem((n_users, n_items), c)
        }
        FillStrategy::GlobalMean => {
            let g = m.global_mean().ok_or(Error::NoObservations)?;
            Array2::from_elem((n_users, n_items), g)
        }
        FillStrategy::UserMean => {
            let g = m.global_mean().ok_or(Error::NoObservations)?;
            let means = m.user_means();
            Array2::from_shape_fn((n_users, n_items), |(u, _)| means[u].unwrap_or(g))
        }
        FillStrategy::ItemMean => {
            let g = m.global_mean().ok_or(Error::NoObservations)?;
            let means = m.item_means();
            Array2::from_shape_fn((n_users, n_items), |(_, i)| means[i].unwrap_or(g))
        }
    };
    for (u, i, v) in m.iter() {
        dense[[u, i]] = v;
    }
    Ok(DenseMatrix::from_array_unchecked(dense))
}
