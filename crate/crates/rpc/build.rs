fn main() {
    tonic_prost_build::compile_protos("proto/selection_tool.proto").expect("compile selection_tool.proto");
}
