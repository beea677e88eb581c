//! Every example runs to completion.

macro_rules! example {
    ($name:ident, $file:literal) => {
        #[allow(dead_code)]
        #[path = $file]
        mod $name;

        #[test]
        fn $name() {
            $name::run().expect(concat!(stringify!($name), " example failed"));
        }
    };
}

example!(dataset_pipeline, "../examples/dataset_pipeline.rs");
example!(train_mf, "../examples/train_mf.rs");
example!(train_multvae, "../examples/train_multvae.rs");
example!(crawl_mock, "../examples/crawl_mock.rs");
example!(resolve_previews, "../examples/resolve_previews.rs");
example!(run_study, "../examples/run_study.rs");
