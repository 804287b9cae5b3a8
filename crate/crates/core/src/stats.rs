//! Dataset statistics: category counts, per-image distributions, size-class
//! proportions and the ordered class co-occurrence matrix.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{size_class, Dataset, SceneAnnotation, SizeClass, Split};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("reports were computed over different category registries")]
    RegistryMismatch,
    #[error("split {0} appears more than once")]
    DuplicateSplit(&'static str),
    #[error("no reports given")]
    Empty,
}

/// Value → number of images with that value.
pub type Histogram = BTreeMap<usize, usize>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeClassCounts {
    pub large: usize,
    pub medium: usize,
    pub small: usize,
    pub tiny: usize,
}

impl SizeClassCounts {
    pub fn total(&self) -> usize {
        self.large + self.medium + self.small + self.tiny
    }

    fn add(&mut self, c: SizeClass) {
        match c {
            SizeClass::Large => self.large += 1,
            SizeClass::Medium => self.medium += 1,
            SizeClass::Small => self.small += 1,
            SizeClass::Tiny => self.tiny += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeClassFractions {
    pub large: f64,
    pub medium: f64,
    pub small: f64,
    pub tiny: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageHistograms {
    pub objects: Histogram,
    pub object_categories: Histogram,
    pub relations: Histogram,
    pub relation_categories: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub split: Split,
    pub n_images: usize,
    pub n_objects: usize,
    pub n_relations: usize,
    pub object_categories: Vec<String>,
    pub relation_categories: Vec<String>,
    pub object_counts: Vec<usize>,
    pub relation_counts: Vec<usize>,
    pub per_image: ImageHistograms,
    pub size_class_counts: SizeClassCounts,
    /// All zero when the dataset has no objects.
    pub size_class_fractions: SizeClassFractions,
    /// `ln(1 + n)` where `n` counts relations with subject class row and object class column.
    pub cooccurrence_log: Vec<Vec<f64>>,
}

/// Partial counts that merge associatively, one per image or per shard.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsAccumulator {
    n_images: usize,
    object_counts: Vec<usize>,
    relation_counts: Vec<usize>,
    per_image: ImageHistograms,
    sizes: SizeClassCounts,
    cooccurrence: Vec<usize>,
}

fn bump(h: &mut Histogram, v: usize) {
    *h.entry(v).or_insert(0) += 1;
}

impl StatsAccumulator {
    pub fn new(n_objects: usize, n_relations: usize) -> Self {
        Self {
            n_images: 0,
            object_counts: vec![0; n_objects],
            relation_counts: vec![0; n_relations],
            per_image: ImageHistograms::default(),
            sizes: SizeClassCounts::default(),
            cooccurrence: vec![0; n_objects * n_objects],
        }
    }

    pub fn add_scene(&mut self, scene: &SceneAnnotation) {
        let k = self.object_counts.len();
        self.n_images += 1;
        for o in &scene.objects {
            self.object_counts[o.category] += 1;
            self.sizes.add(size_class(&o.obb));
        }
        let pos = scene.id_positions();
        for t in &scene.relations {
            self.relation_counts[t.predicate] += 1;
            let s = scene.objects[pos[&t.subject]].category;
            let o = scene.objects[pos[&t.object]].category;
            self.cooccurrence[s * k + o] += 1;
        }
        let object_kinds: HashSet<usize> = scene.objects.iter().map(|o| o.category).collect();
        let relation_kinds: HashSet<usize> = scene.relations.iter().map(|t| t.predicate).collect();
        bump(&mut self.per_image.objects, scene.objects.len());
        bump(&mut self.per_image.object_categories, object_kinds.len());
        bump(&mut self.per_image.relations, scene.relations.len());
        bump(&mut self.per_image.relation_categories, relation_kinds.len());
    }

    pub fn merge(mut self, other: &StatsAccumulator) -> Self {
        self.n_images += other.n_images;
        for (a, b) in self.object_counts.iter_mut().zip(&other.object_counts) {
            *a += b;
        }
        for (a, b) in self.relation_counts.iter_mut().zip(&other.relation_counts) {
            *a += b;
        }
        for (a, b) in self.cooccurrence.iter_mut().zip(&other.cooccurrence) {
            *a += b;
        }
        let pairs = [
            (&mut self.per_image.objects, &other.per_image.objects),
            (&mut self.per_image.object_categories, &other.per_image.object_categories),
            (&mut self.per_image.relations, &other.per_image.relations),
            (&mut self.per_image.relation_categories, &other.per_image.relation_categories),
        ];
        for (mine, theirs) in pairs {
            for (v, c) in theirs {
                *mine.entry(*v).or_insert(0) += c;
            }
        }
        self.sizes.large += other.sizes.large;
        self.sizes.medium += other.sizes.medium;
        self.sizes.small += other.sizes.small;
        self.sizes.tiny += other.sizes.tiny;
        self
    }

    fn finish(self, dataset: &Dataset) -> StatsReport {
        let k = self.object_counts.len();
        let total = self.sizes.total();
        let frac = |c: usize| if total == 0 { 0.0 } else { c as f64 / total as f64 };
        StatsReport {
            split: dataset.split,
            n_images: self.n_images,
            n_objects: self.object_counts.iter().sum(),
            n_relations: self.relation_counts.iter().sum(),
            object_categories: dataset.registry.object_names().to_vec(),
            relation_categories: dataset.registry.relation_names().to_vec(),
            size_class_fractions: SizeClassFractions {
                large: frac(self.sizes.large),
                medium: frac(self.sizes.medium),
                small: frac(self.sizes.small),
                tiny: frac(self.sizes.tiny),
            },
            size_class_counts: self.sizes,
            cooccurrence_log: self
                .cooccurrence
                .chunks(k.max(1))
                .take(k)
                .map(|row| row.iter().map(|&c| (1.0 + c as f64).ln()).collect())
                .collect(),
            object_counts: self.object_counts,
            relation_counts: self.relation_counts,
            per_image: self.per_image,
        }
    }
}

pub fn compute_stats(dataset: &Dataset) -> StatsReport {
    let (k, r) = (dataset.registry.num_objects(), dataset.registry.num_relations());
    let acc = dataset
        .scenes
        .iter()
        .map(|s| {
            let mut a = StatsAccumulator::new(k, r);
            a.add_scene(s);
            a
        })
        .fold(StatsAccumulator::new(k, r), |acc, a| acc.merge(&a));
    acc.finish(dataset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvTable {
    /// `category,count`
    Objects,
    /// `category,count`
    Relations,
    /// `size_class,count,fraction`
    SizeClasses,
    /// `histogram,value,images`
    Histograms,
    /// Header `subject` then object class names; one row per subject class.
    Cooccurrence,
}

impl CsvTable {
    pub const ALL: [CsvTable; 5] = [
        CsvTable::Objects,
        CsvTable::Relations,
        CsvTable::SizeClasses,
        CsvTable::Histograms,
        CsvTable::Cooccurrence,
    ];

    pub fn file_stem(&self) -> &'static str {
        match self {
            CsvTable::Objects => "objects",
            CsvTable::Relations => "relations",
            CsvTable::SizeClasses => "size_classes",
            CsvTable::Histograms => "histograms",
            CsvTable::Cooccurrence => "cooccurrence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv(CsvTable),
}

fn write_rows<I, R>(rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row).expect("writing to memory");
    }
    w.into_inner().expect("flushing to memory")
}

pub fn emit_report(report: &StatsReport, format: ReportFormat) -> Vec<u8> {
    let table = match format {
        ReportFormat::Json => return serde_json::to_vec(report).expect("report serialization is infallible"),
        ReportFormat::Csv(t) => t,
    };
    let mut rows: Vec<Vec<String>> = Vec::new();
    match table {
        CsvTable::Objects | CsvTable::Relations => {
            let (names, counts) = if table == CsvTable::Objects {
                (&report.object_categories, &report.object_counts)
            } else {
                (&report.relation_categories, &report.relation_counts)
            };
            rows.push(vec!["category".into(), "count".into()]);
            rows.extend(names.iter().zip(counts).map(|(n, c)| vec![n.clone(), c.to_string()]));
        }
        CsvTable::SizeClasses => {
            let (c, f) = (&report.size_class_counts, &report.size_class_fractions);
            rows.push(vec!["size_class".into(), "count".into(), "fraction".into()]);
            for (name, n, fr) in [
                ("large", c.large, f.large),
                ("medium", c.medium, f.medium),
                ("small", c.small, f.small),
                ("tiny", c.tiny, f.tiny),
            ] {
                rows.push(vec![name.into(), n.to_string(), fr.to_string()]);
            }
        }
        CsvTable::Histograms => {
            rows.push(vec!["histogram".into(), "value".into(), "images".into()]);
            let h = &report.per_image;
            for (name, hist) in [
                ("objects", &h.objects),
                ("object_categories", &h.object_categories),
                ("relations", &h.relations),
                ("relation_categories", &h.relation_categories),
            ] {
                rows.extend(hist.iter().map(|(v, n)| vec![name.into(), v.to_string(), n.to_string()]));
            }
        }
        CsvTable::Cooccurrence => {
            let mut header = vec!["subject".to_string()];
            header.extend(report.object_categories.iter().cloned());
            rows.push(header);
            for (name, row) in report.object_categories.iter().zip(&report.cooccurrence_log) {
                let mut r = vec![name.clone()];
                r.extend(row.iter().map(|v| v.to_string()));
                rows.push(r);
            }
        }
    }
    write_rows(rows)
}

/// Category counts side by side, one column per split in train/val/test order.
pub fn split_table_csv(reports: &[&StatsReport], table: CsvTable) -> Result<Vec<u8>, StatsError> {
    let first = reports.first().ok_or(StatsError::Empty)?;
    let mut ordered: Vec<&StatsReport> = reports.to_vec();
    ordered.sort_by_key(|r| r.split as u8);
    for w in ordered.windows(2) {
        if w[0].split == w[1].split {
            return Err(StatsError::DuplicateSplit(w[0].split.as_str()));
        }
    }
    if reports
        .iter()
        .any(|r| r.object_categories != first.object_categories || r.relation_categories != first.relation_categories)
    {
        return Err(StatsError::RegistryMismatch);
    }
    let names = if table == CsvTable::Relations {
        &first.relation_categories
    } else {
        &first.object_categories
    };
    let mut header = vec!["category".to_string()];
    header.extend(ordered.iter().map(|r| r.split.as_str().to_string()));
    let mut rows = vec![header];
    for (i, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(ordered.iter().map(|r| {
            let counts = if table == CsvTable::Relations {
                &r.relation_counts
            } else {
                &r.object_counts
            };
            counts[i].to_string()
        }));
        rows.push(row);
    }
    Ok(write_rows(rows))
}
