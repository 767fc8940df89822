use proptest::prelude::*;

use gnnsim::compiler::{ModelSpec, PartitionedMatrix};
use gnnsim::io;
use gnnsim::matrix::{CooMatrix, DenseMatrix, Layout, MatrixRef};
use gnnsim::transform::{dense_to_sparse, sparse_to_dense};

fn dense_strategy() -> impl Strategy<Value = DenseMatrix> {
    (1usize..40, 1usize..40).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop_oneof![3 => Just(0.0f32), 1 => -100.0f32..100.0], r * c)
            .prop_map(move |v| DenseMatrix::new(r, c, Layout::RowMajor, v).unwrap())
    })
}

proptest! {
    #[test]
    fn dense_sparse_dense(m in dense_strategy()) {
        let back = sparse_to_dense(&dense_to_sparse(&m)).unwrap();
        prop_assert!(back.same_elements(&m));
    }

    #[test]
    fn dense_text_and_binary(m in dense_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let (t, b) = (dir.path().join("m.txt"), dir.path().join("m.bin"));
        io::save_dense(&t, &m).unwrap();
        io::save_dense(&b, &m).unwrap();
        prop_assert!(io::load_dense(&t).unwrap().same_elements(&m));
        prop_assert!(io::load_dense(&b).unwrap().same_elements(&m));
    }

    #[test]
    fn graph_files(m in dense_strategy()) {
        let n = m.rows().max(m.cols());
        let coo = CooMatrix::from_triplets(
            n, n, Layout::RowMajor,
            dense_to_sparse(&m).entries().iter().map(|e| (e.row, e.col, 1.0)),
        ).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (el, mtx) = (dir.path().join("g.txt"), dir.path().join("g.mtx"));
        io::write_edge_list(&el, &coo).unwrap();
        io::write_matrix_market(&mtx, &coo).unwrap();
        prop_assert_eq!(io::load_graph(&el).unwrap(), coo.clone());
        prop_assert_eq!(io::load_graph(&mtx).unwrap(), coo);
    }

    #[test]
    fn blocks_reassemble(m in dense_strategy(), br in 1usize..20, bc in 1usize..20) {
        for mref in [MatrixRef::Dense(m.clone()), MatrixRef::Coo(dense_to_sparse(&m))] {
            let p = PartitionedMatrix::partition("m", &mref, br, bc).unwrap();
            prop_assert_eq!(p.nnz(), m.nnz());
            prop_assert!(p.assemble().unwrap().same_elements(&m));
        }
    }
}

#[test]
fn model_spec_toml_roundtrip() {
    for id in ["gcn2", "sage2", "gin2", "sgc2"] {
        let spec = ModelSpec::zoo(id, 12, 8, 3).unwrap();
        assert_eq!(ModelSpec::from_toml_str(&spec.to_toml_string()).unwrap(), spec);
    }
}

#[test]
fn weight_bundle_roundtrip() {
    let spec = ModelSpec::zoo("gin2", 6, 5, 2).unwrap();
    let w = gnnsim::compiler::WeightSet::random(&spec, 0.4, &mut gnnsim::generate::seeded_rng(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.txt");
    io::save_weights(&p, &w).unwrap();
    assert_eq!(io::load_weights(&p).unwrap(), w);
}

#[test]
fn malformed_edge_list_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.txt");
    std::fs::write(&p, "0 1\n1 x\n").unwrap();
    let msg = io::load_graph(&p).unwrap_err().to_string();
    assert!(msg.contains(":2"), "{msg}");
}
