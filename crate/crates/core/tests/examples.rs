//! Every example runs to completion.

macro_rules! example {
    ($name:ident, $file:literal) => {
        #[allow(dead_code)]
        #[path = $file]
        mod $name;

        #[test]
        fn $name() {
            $name::run_example().unwrap();
        }
    };
}

example!(laguerre_cells, "../examples/laguerre_cells.rs");
example!(damped_newton, "../examples/damped_newton.rs");
example!(convex_extension, "../examples/convex_extension.rs");
example!(convergence_rates, "../examples/convergence_rates.rs");
example!(stability, "../examples/stability.rs");
example!(torus, "../examples/torus.rs");
example!(experiment_config, "../examples/experiment_config.rs");
