//! Batch-task table parsing, DAG reconstruction, and cleaning.
//!
//! Input is the nine-column batch_task layout (task_name, instance_num,
//! job_name, task_type, status, start_time, end_time, plan_cpu, plan_mem).
//! Dependencies are encoded in task names: after stripping the leading
//! alphabetic prefix, the underscore-separated integers are the task's own id
//! followed by its parent ids.

use std::collections::{HashMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{job_runtime, validate_dag, JobGraph, JobNode};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unreadable input stream: {0}")]
    Stream(#[from] csv::Error),
    #[error("invalid column map: {0}")]
    ColumnMap(String),
}

/// One parsed batch_task row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_name: String,
    pub instance_num: i64,
    pub job_name: String,
    pub task_type: String,
    pub status: String,
    pub start_time: i64,
    pub end_time: i64,
    /// 100 means one core.
    pub plan_cpu: f64,
    /// Normalized to [0, 100].
    pub plan_mem: f64,
}

/// Role of one CSV column. `Ignore` skips a column entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    TaskName,
    InstanceNum,
    JobName,
    TaskType,
    Status,
    StartTime,
    EndTime,
    PlanCpu,
    PlanMem,
    Ignore,
}

impl ColumnRole {
    const REQUIRED: [ColumnRole; 9] = [
        ColumnRole::TaskName,
        ColumnRole::InstanceNum,
        ColumnRole::JobName,
        ColumnRole::TaskType,
        ColumnRole::Status,
        ColumnRole::StartTime,
        ColumnRole::EndTime,
        ColumnRole::PlanCpu,
        ColumnRole::PlanMem,
    ];

    fn is_numeric(self) -> bool {
        matches!(
            self,
            ColumnRole::InstanceNum
                | ColumnRole::StartTime
                | ColumnRole::EndTime
                | ColumnRole::PlanCpu
                | ColumnRole::PlanMem
        )
    }
}

/// Whether the first row is a header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderMode {
    /// First row is a header iff none of its numeric-role cells parse as a
    /// number.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub min_tasks: usize,
    pub max_runtime_s: i64,
    pub required_status: String,
    pub column_map: Vec<ColumnRole>,
    #[serde(default)]
    pub header_mode: HeaderMode,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            min_tasks: 10,
            max_runtime_s: 3600,
            required_status: "Terminated".to_string(),
            column_map: ColumnRole::REQUIRED.to_vec(),
            header_mode: HeaderMode::Auto,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.min_tasks < 1 {
            return Err(IngestError::ColumnMap("min_tasks must be >= 1".into()));
        }
        if self.max_runtime_s <= 0 {
            return Err(IngestError::ColumnMap("max_runtime_s must be > 0".into()));
        }
        for role in ColumnRole::REQUIRED {
            let n = self.column_map.iter().filter(|&&r| r == role).count();
            if n != 1 {
                return Err(IngestError::ColumnMap(format!(
                    "role {role:?} must appear exactly once in column_map, found {n}"
                )));
            }
        }
        Ok(())
    }
}

/// A row the parser refused, with its 1-based row number in the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<TaskRecord>,
    pub rejected: Vec<RejectedRow>,
}

/// Parse a batch_task CSV stream. Rows with missing or unparseable mandatory
/// fields land in `rejected` with a reason; only an unreadable stream is
/// fatal. Zero start or end times are parseable and pass through (cleaning
/// drops those jobs); zero plan_cpu is treated as an undefined value and
/// rejected here, as is plan_mem outside [0, 100].
pub fn parse_task_table<R: Read>(
    reader: R,
    cfg: &IngestConfig,
) -> Result<ParseOutcome, IngestError> {
    cfg.validate()?;
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut outcome = ParseOutcome::default();
    for (i, row) in csv_reader.records().enumerate() {
        let row = row?;
        let row_number = i + 1;
        if i == 0 {
            let is_header = match cfg.header_mode {
                HeaderMode::Present => true,
                HeaderMode::Absent => false,
                HeaderMode::Auto => looks_like_header(&row, &cfg.column_map),
            };
            if is_header {
                continue;
            }
        }
        match parse_row(&row, &cfg.column_map) {
            Ok(record) => outcome.records.push(record),
            Err(reason) => outcome.rejected.push(RejectedRow {
                row: row_number,
                reason,
            }),
        }
    }
    Ok(outcome)
}

fn looks_like_header(row: &csv::StringRecord, column_map: &[ColumnRole]) -> bool {
    for (cell, role) in row.iter().zip(column_map) {
        if role.is_numeric() && cell.trim().parse::<f64>().is_ok() {
            return false;
        }
    }
    true
}

fn parse_row(row: &csv::StringRecord, column_map: &[ColumnRole]) -> Result<TaskRecord, String> {
    if row.len() != column_map.len() {
        return Err(format!(
            "wrong column count: expected {}, found {}",
            column_map.len(),
            row.len()
        ));
    }
    let mut task_name = None;
    let mut instance_num = None;
    let mut job_name = None;
    let mut task_type = None;
    let mut status = None;
    let mut start_time = None;
    let mut end_time = None;
    let mut plan_cpu = None;
    let mut plan_mem = None;
    for (cell, &role) in row.iter().zip(column_map) {
        let cell = cell.trim();
        match role {
            ColumnRole::Ignore => {}
            ColumnRole::TaskName => task_name = Some(cell.to_string()),
            ColumnRole::JobName => job_name = Some(cell.to_string()),
            ColumnRole::TaskType => task_type = Some(cell.to_string()),
            ColumnRole::Status => status = Some(cell.to_string()),
            ColumnRole::InstanceNum => instance_num = Some(parse_int(cell, "instance_num")?),
            ColumnRole::StartTime => start_time = Some(parse_int(cell, "start_time")?),
            ColumnRole::EndTime => end_time = Some(parse_int(cell, "end_time")?),
            ColumnRole::PlanCpu => plan_cpu = Some(parse_real(cell, "plan_cpu")?),
            ColumnRole::PlanMem => plan_mem = Some(parse_real(cell, "plan_mem")?),
        }
    }
    let record = TaskRecord {
        task_name: require_text(task_name, "task_name")?,
        instance_num: instance_num.unwrap(),
        job_name: require_text(job_name, "job_name")?,
        task_type: task_type.unwrap_or_default(),
        status: require_text(status, "status")?,
        start_time: start_time.unwrap(),
        end_time: end_time.unwrap(),
        plan_cpu: plan_cpu.unwrap(),
        plan_mem: plan_mem.unwrap(),
    };
    if record.start_time < 0 || record.end_time < 0 {
        return Err("invalid value: negative time".into());
    }
    if record.start_time != 0 && record.end_time != 0 && record.end_time < record.start_time {
        return Err("invalid value: end_time before start_time".into());
    }
    if record.instance_num < 0 {
        return Err("invalid value: instance_num".into());
    }
    if record.plan_cpu == 0.0 {
        return Err("undefined value: plan_cpu".into());
    }
    if record.plan_cpu < 0.0 {
        return Err("invalid value: plan_cpu".into());
    }
    if !(0.0..=100.0).contains(&record.plan_mem) {
        return Err("invalid value: plan_mem".into());
    }
    Ok(record)
}

fn parse_int(cell: &str, field: &str) -> Result<i64, String> {
    if cell.is_empty() {
        return Err(format!("undefined value: {field}"));
    }
    cell.parse()
        .map_err(|_| format!("invalid value: {field}"))
}

fn parse_real(cell: &str, field: &str) -> Result<f64, String> {
    if cell.is_empty() {
        return Err(format!("undefined value: {field}"));
    }
    let value: f64 = cell
        .parse()
        .map_err(|_| format!("invalid value: {field}"))?;
    if !value.is_finite() {
        return Err(format!("invalid value: {field}"));
    }
    Ok(value)
}

fn require_text(value: Option<String>, field: &str) -> Result<String, String> {
    match value {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(format!("undefined value: {field}")),
    }
}

/// Structural problems detected while building one job's graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildFlag {
    DanglingDependency,
    DuplicateId,
}

/// One job's graph plus the bookkeeping cleaning needs.
#[derive(Debug, Clone)]
pub struct BuiltJob {
    pub graph: JobGraph,
    /// Status per node, aligned with `graph.nodes`.
    pub statuses: Vec<String>,
    pub flags: Vec<BuildFlag>,
}

/// Group records by job and reconstruct each job's DAG from task names.
/// Jobs appear in order of first appearance in the record list.
pub fn build_job_graphs(records: &[TaskRecord]) -> Vec<BuiltJob> {
    let mut job_order = Vec::new();
    let mut by_job: HashMap<&str, Vec<&TaskRecord>> = HashMap::new();
    for record in records {
        let entry = by_job.entry(&record.job_name).or_default();
        if entry.is_empty() {
            job_order.push(record.job_name.as_str());
        }
        entry.push(record);
    }
    job_order
        .into_iter()
        .map(|job| build_one_job(job, &by_job[job]))
        .collect()
}

enum ParsedName {
    Conforming { id: i64, parents: Vec<i64> },
    NonConforming,
}

/// Strip the leading alphabetic prefix, split on '_': first integer is the
/// task id, the rest are parent ids. Any non-integer segment makes the whole
/// name non-conforming.
fn parse_task_name(name: &str) -> ParsedName {
    let rest = name.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    let mut ids = Vec::new();
    for segment in rest.split('_') {
        match segment.parse::<i64>() {
            Ok(id) => ids.push(id),
            Err(_) => return ParsedName::NonConforming,
        }
    }
    match ids.split_first() {
        Some((&id, parents)) => ParsedName::Conforming {
            id,
            parents: parents.to_vec(),
        },
        None => ParsedName::NonConforming,
    }
}

fn build_one_job(job_name: &str, records: &[&TaskRecord]) -> BuiltJob {
    let parsed: Vec<ParsedName> = records
        .iter()
        .map(|r| parse_task_name(&r.task_name))
        .collect();
    // Fresh ids for non-conforming names start above every id a conforming
    // name mentions, so they can never be targeted by a parent reference.
    let mut next_fresh = parsed
        .iter()
        .flat_map(|p| match p {
            ParsedName::Conforming { id, parents } => {
                Some(std::iter::once(*id).chain(parents.iter().copied()))
            }
            ParsedName::NonConforming => None,
        })
        .flatten()
        .max()
        .unwrap_or(0)
        + 1;

    let mut nodes = Vec::with_capacity(records.len());
    let mut statuses = Vec::with_capacity(records.len());
    let mut edges = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut flags = Vec::new();
    for (record, name) in records.iter().zip(&parsed) {
        let id = match name {
            ParsedName::Conforming { id, parents } => {
                for &parent in parents {
                    edges.push((parent, *id));
                }
                *id
            }
            ParsedName::NonConforming => {
                let id = next_fresh;
                next_fresh += 1;
                id
            }
        };
        if !seen_ids.insert(id) && !flags.contains(&BuildFlag::DuplicateId) {
            flags.push(BuildFlag::DuplicateId);
        }
        nodes.push(JobNode {
            task_id: id,
            features: [record.plan_cpu, record.plan_mem, record.instance_num as f64],
            start_time: record.start_time,
            end_time: record.end_time,
        });
        statuses.push(record.status.clone());
    }
    edges.sort_unstable();
    edges.dedup();
    if edges.iter().any(|(from, _)| !seen_ids.contains(from)) {
        flags.push(BuildFlag::DanglingDependency);
        edges.retain(|(from, _)| seen_ids.contains(from));
    }
    BuiltJob {
        graph: JobGraph {
            job_name: job_name.to_string(),
            nodes,
            edges,
        },
        statuses,
        flags,
    }
}

/// Why a job was dropped, keyed by the first violated rule in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropRule {
    /// (a) some task's status differs from the required one.
    Status,
    /// (b) some task has a zero start or end time.
    UndefinedTimes,
    /// (c) the graph is not a valid DAG (cycle, dangling parent, duplicate
    /// id).
    InvalidDag,
    /// (d) fewer tasks than the minimum.
    TooFewTasks,
    /// (e) runtime above the maximum.
    RuntimeTooLong,
}

pub const DROP_RULES: [DropRule; 5] = [
    DropRule::Status,
    DropRule::UndefinedTimes,
    DropRule::InvalidDag,
    DropRule::TooFewTasks,
    DropRule::RuntimeTooLong,
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanSummary {
    pub input_jobs: usize,
    pub surviving_jobs: usize,
    pub dropped: Vec<(DropRule, usize)>,
}

/// Apply the cleaning rules in order (a) status, (b) times, (c) DAG validity,
/// (d) minimum size, (e) maximum runtime. Each dropped job is counted once,
/// under the first rule it violates.
pub fn clean_jobs(jobs: Vec<BuiltJob>, cfg: &IngestConfig) -> (Vec<JobGraph>, CleanSummary) {
    let mut counts: HashMap<DropRule, usize> = HashMap::new();
    let input_jobs = jobs.len();
    let mut survivors = Vec::new();
    for job in jobs {
        match first_violation(&job, cfg) {
            Some(rule) => *counts.entry(rule).or_insert(0) += 1,
            None => survivors.push(job.graph),
        }
    }
    let summary = CleanSummary {
        input_jobs,
        surviving_jobs: survivors.len(),
        dropped: DROP_RULES
            .iter()
            .filter_map(|rule| counts.get(rule).map(|&n| (*rule, n)))
            .collect(),
    };
    (survivors, summary)
}

fn first_violation(job: &BuiltJob, cfg: &IngestConfig) -> Option<DropRule> {
    if job.statuses.iter().any(|s| *s != cfg.required_status) {
        return Some(DropRule::Status);
    }
    if job
        .graph
        .nodes
        .iter()
        .any(|n| n.start_time == 0 || n.end_time == 0)
    {
        return Some(DropRule::UndefinedTimes);
    }
    if !job.flags.is_empty() || validate_dag(&job.graph).is_err() {
        return Some(DropRule::InvalidDag);
    }
    if job.graph.node_count() < cfg.min_tasks {
        return Some(DropRule::TooFewTasks);
    }
    match job_runtime(&job.graph) {
        Ok(runtime) if runtime <= cfg.max_runtime_s => None,
        _ => Some(DropRule::RuntimeTooLong),
    }
}

/// Runtime-stratified split: jobs are sorted by runtime, cut into
/// equal-frequency bins, and within each bin a seeded shuffle sends
/// ceil(test_fraction * bin_size) jobs to the test side. Outputs preserve the
/// input order within each side.
pub fn stratified_split(
    jobs: &[JobGraph],
    test_fraction: f64,
    n_bins: usize,
    seed: u64,
) -> (Vec<JobGraph>, Vec<JobGraph>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    assert!(
        test_fraction > 0.0 && test_fraction < 1.0,
        "test_fraction must lie in (0, 1)"
    );
    assert!(n_bins >= 1, "n_bins must be >= 1");
    let n = jobs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ra = job_runtime(&jobs[a]).unwrap_or(0);
        let rb = job_runtime(&jobs[b]).unwrap_or(0);
        ra.cmp(&rb).then(a.cmp(&b))
    });
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; n];
    for b in 0..n_bins {
        let lo = b * n / n_bins;
        let hi = (b + 1) * n / n_bins;
        if lo >= hi {
            continue;
        }
        let mut bin: Vec<usize> = order[lo..hi].to_vec();
        bin.shuffle(&mut rng);
        let n_test = ((test_fraction * bin.len() as f64).ceil() as usize).min(bin.len());
        for &idx in bin.iter().take(n_test) {
            is_test[idx] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (idx, job) in jobs.iter().enumerate() {
        if is_test[idx] {
            test.push(job.clone());
        } else {
            train.push(job.clone());
        }
    }
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "task_name,instance_num,job_name,task_type,status,start_time,end_time,plan_cpu,plan_mem\n";

    fn row(task: &str, job: &str) -> String {
        format!("{task},1,{job},A,Terminated,100,200,100,0.5\n")
    }

    fn parse(text: &str) -> ParseOutcome {
        parse_task_table(text.as_bytes(), &IngestConfig::default()).unwrap()
    }

    #[test]
    fn header_is_auto_detected() {
        let text = format!("{HEADER}{}", row("M1", "j_1"));
        let outcome = parse(&text);
        assert_eq!(outcome.records.len(), 1);
        assert!(outcome.rejected.is_empty());
        assert_eq!(outcome.records[0].plan_cpu, 100.0);
    }

    #[test]
    fn headerless_input_parses_from_row_one() {
        let text = format!("{}{}", row("M1", "j_1"), row("M2_1", "j_1"));
        let outcome = parse(&text);
        assert_eq!(outcome.records.len(), 2);
    }

    #[test]
    fn empty_end_time_is_rejected_as_undefined() {
        let text = "M1,1,j_1,A,Terminated,100,,100,0.5\n";
        let outcome = parse(text);
        assert!(outcome.records.is_empty());
        assert_eq!(outcome.rejected.len(), 1);
        assert!(outcome.rejected[0].reason.contains("undefined value"));
    }

    #[test]
    fn zero_plan_cpu_is_rejected_as_undefined() {
        let text = "M1,1,j_1,A,Terminated,100,200,0,0.5\n";
        let outcome = parse(text);
        assert!(outcome.records.is_empty());
        assert!(outcome.rejected[0].reason.contains("undefined value: plan_cpu"));
    }

    #[test]
    fn zero_times_pass_parsing() {
        let text = "M1,1,j_1,A,Terminated,0,200,100,0.5\n";
        let outcome = parse(text);
        assert_eq!(outcome.records.len(), 1);
        assert_eq!(outcome.records[0].start_time, 0);
    }

    #[test]
    fn malformed_row_among_good_rows_conserves_counts() {
        let text = format!(
            "{}M2,not_a_number,j_1,A,Terminated,100,200,100,0.5\n{}",
            row("M1", "j_1"),
            row("M3_1", "j_1")
        );
        let outcome = parse(&text);
        assert_eq!(outcome.records.len(), 2);
        assert_eq!(outcome.rejected.len(), 1);
        assert_eq!(outcome.rejected[0].row, 2);
    }

    #[test]
    fn wrong_column_count_is_rejected() {
        let text = "M1,1,j_1,A,Terminated,100,200\n";
        let outcome = parse(text);
        assert!(outcome.rejected[0].reason.contains("wrong column count"));
    }

    #[test]
    fn plan_mem_outside_range_is_rejected() {
        let text = "M1,1,j_1,A,Terminated,100,200,100,250\n";
        let outcome = parse(text);
        assert!(outcome.rejected[0].reason.contains("plan_mem"));
    }

    fn records(names: &[&str]) -> Vec<TaskRecord> {
        names
            .iter()
            .map(|name| TaskRecord {
                task_name: name.to_string(),
                instance_num: 1,
                job_name: "j_1".into(),
                task_type: "A".into(),
                status: "Terminated".into(),
                start_time: 100,
                end_time: 200,
                plan_cpu: 100.0,
                plan_mem: 0.5,
            })
            .collect()
    }

    #[test]
    fn dependency_encoding_builds_expected_edges() {
        let jobs = build_job_graphs(&records(&["M1", "M2_1", "R3_1_2"]));
        assert_eq!(jobs.len(), 1);
        let g = &jobs[0].graph;
        let ids: Vec<i64> = g.nodes.iter().map(|n| n.task_id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
        assert_eq!(g.edges, vec![(1, 2), (1, 3), (2, 3)]);
        assert!(jobs[0].flags.is_empty());
        assert!(validate_dag(g).is_ok());
    }

    #[test]
    fn non_conforming_name_becomes_isolated_node() {
        let jobs = build_job_graphs(&records(&["task_XYZ"]));
        let g = &jobs[0].graph;
        assert_eq!(g.node_count(), 1);
        assert!(g.edges.is_empty());
        assert!(jobs[0].flags.is_empty());
    }

    #[test]
    fn fresh_ids_do_not_collide_with_parent_references() {
        let jobs = build_job_graphs(&records(&["M1", "task_abc", "R3_1"]));
        let g = &jobs[0].graph;
        let ids: Vec<i64> = g.nodes.iter().map(|n| n.task_id).collect();
        assert_eq!(ids, vec![1, 4, 3]);
        assert_eq!(g.edges, vec![(1, 3)]);
    }

    #[test]
    fn missing_parent_flags_dangling_dependency() {
        let jobs = build_job_graphs(&records(&["M1", "M2_5"]));
        assert_eq!(jobs[0].flags, vec![BuildFlag::DanglingDependency]);
    }

    #[test]
    fn duplicate_task_id_is_flagged() {
        let jobs = build_job_graphs(&records(&["M1", "R1"]));
        assert_eq!(jobs[0].flags, vec![BuildFlag::DuplicateId]);
    }

    #[test]
    fn jobs_group_by_name_in_first_appearance_order() {
        let mut recs = records(&["M1", "M2_1"]);
        let mut other = records(&["M1"]);
        other[0].job_name = "j_0".into();
        recs.insert(1, other[0].clone());
        let jobs = build_job_graphs(&recs);
        assert_eq!(jobs.len(), 2);
        assert_eq!(jobs[0].graph.job_name, "j_1");
        assert_eq!(jobs[1].graph.job_name, "j_0");
    }

    fn built_job(n_tasks: usize, status: &str, start: i64, end: i64) -> BuiltJob {
        let names: Vec<String> = (1..=n_tasks).map(|i| format!("M{i}")).collect();
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut recs = records(&name_refs);
        for r in &mut recs {
            r.status = status.to_string();
            r.start_time = start;
            r.end_time = end;
        }
        build_job_graphs(&recs).pop().unwrap()
    }

    #[test]
    fn cleaning_applies_rules_in_order_with_counts() {
        let cfg = IngestConfig::default();
        let jobs = vec![
            built_job(10, "Terminated", 100, 200),
            built_job(10, "Failed", 100, 200),
            built_job(10, "Terminated", 0, 200),
            built_job(9, "Terminated", 100, 200),
            built_job(10, "Terminated", 100, 100 + 3601),
        ];
        let (survivors, summary) = clean_jobs(jobs, &cfg);
        assert_eq!(survivors.len(), 1);
        assert_eq!(summary.input_jobs, 5);
        assert_eq!(summary.surviving_jobs, 1);
        assert_eq!(
            summary.dropped,
            vec![
                (DropRule::Status, 1),
                (DropRule::UndefinedTimes, 1),
                (DropRule::TooFewTasks, 1),
                (DropRule::RuntimeTooLong, 1),
            ]
        );
    }

    #[test]
    fn dangling_jobs_drop_under_dag_rule() {
        let cfg = IngestConfig {
            min_tasks: 1,
            ..IngestConfig::default()
        };
        let jobs = build_job_graphs(&records(&["M1", "M2_5"]));
        let (survivors, summary) = clean_jobs(jobs, &cfg);
        assert!(survivors.is_empty());
        assert_eq!(summary.dropped, vec![(DropRule::InvalidDag, 1)]);
    }

    #[test]
    fn runtime_at_the_limit_survives() {
        let cfg = IngestConfig::default();
        let jobs = vec![built_job(10, "Terminated", 100, 100 + 3600)];
        let (survivors, _) = clean_jobs(jobs, &cfg);
        assert_eq!(survivors.len(), 1);
    }

    fn split_fixture(n: usize) -> Vec<JobGraph> {
        (0..n)
            .map(|i| {
                let mut job = built_job(1, "Terminated", 100, 100 + 10 * (i as i64 + 1));
                job.graph.job_name = format!("j_{i}");
                job.graph
            })
            .collect()
    }

    #[test]
    fn split_ten_jobs_single_bin_gives_eight_two() {
        let jobs = split_fixture(10);
        let (train, test) = stratified_split(&jobs, 0.2, 1, 7);
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
    }

    #[test]
    fn split_is_deterministic_and_partitions_input() {
        let jobs = split_fixture(37);
        let (train_a, test_a) = stratified_split(&jobs, 0.25, 5, 42);
        let (train_b, test_b) = stratified_split(&jobs, 0.25, 5, 42);
        assert_eq!(train_a, train_b);
        assert_eq!(test_a, test_b);
        let mut names: Vec<&str> = train_a
            .iter()
            .chain(&test_a)
            .map(|j| j.job_name.as_str())
            .collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 37);
    }

    #[test]
    fn split_balances_bins_within_one_job() {
        let jobs = split_fixture(100);
        let (_, test) = stratified_split(&jobs, 0.2, 10, 3);
        assert_eq!(test.len(), 20);
        let mut per_bin = vec![0usize; 10];
        for job in &test {
            let runtime = job_runtime(job).unwrap();
            let rank = (runtime / 10 - 1) as usize;
            per_bin[rank * 10 / 100] += 1;
        }
        for &count in &per_bin {
            assert_eq!(count, 2);
        }
    }

    #[test]
    fn different_seeds_can_differ() {
        let jobs = split_fixture(50);
        let (_, test_a) = stratified_split(&jobs, 0.2, 5, 1);
        let (_, test_b) = stratified_split(&jobs, 0.2, 5, 2);
        let names = |v: &[JobGraph]| v.iter().map(|j| j.job_name.clone()).collect::<Vec<_>>();
        assert_ne!(names(&test_a), names(&test_b));
    }
}
