//! Tab-separated exports for plotting and external analysis.

use std::io::Write;

use crate::cluster::{ClusterSolution, LabelUniverse};
use crate::composite::CompositeLabel;
use crate::pipeline::ClustersOutput;

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().delimiter(b'\t').from_writer(w)
}

/// `sample_id, retained_label, cluster_id`, one row per sample.
pub fn write_assignments<W: Write>(clusters: &ClustersOutput, w: W) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["sample_id", "retained_label", "cluster_id"])?;
    for s in &clusters.samples {
        out.write_record([s.sample_id.as_str(), &s.label, &s.cluster_id.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `k, s, s_adj` for every evaluated cluster count.
pub fn write_curve<W: Write>(solution: &ClusterSolution, w: W) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["k", "s", "s_adj"])?;
    for r in &solution.curve {
        out.write_record([r.k.to_string(), r.s.to_string(), r.s_adj.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `label, multiplicity, e0, e1, ...`, one row per unique label.
pub fn write_embeddings<W: Write>(universe: &LabelUniverse, w: W) -> csv::Result<()> {
    let mut out = writer(w);
    let dim = universe.embeddings.first().map_or(0, |e| e.dim());
    let mut header = vec!["label".to_string(), "multiplicity".to_string()];
    header.extend((0..dim).map(|i| format!("e{i}")));
    out.write_record(&header)?;
    for ((label, m), e) in universe.labels.iter().zip(&universe.multiplicity).zip(&universe.embeddings) {
        let mut row = vec![label.clone(), m.to_string()];
        row.extend(e.values().iter().map(f64::to_string));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_composites<W: Write>(composites: &[CompositeLabel], w: W) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["cluster_id", "size", "distribution", "composite_label"])?;
    for c in composites {
        out.write_record([c.cluster_id.to_string(), c.size.to_string(), c.distribution.clone(), c.sentence.clone()])?;
    }
    out.flush()?;
    Ok(())
}
