/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_basis_count: (a: number) => number;
export const demo_basis_image: (a: number, b: number) => [number, number, number, number];
export const demo_depth: (a: number) => number;
export const demo_feature_slice: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_height: (a: number) => number;
export const demo_mean_activations: (a: number) => [number, number];
export const demo_new: (a: number, b: number) => [number, number, number];
export const demo_scan_slice: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_train: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const demo_width: (a: number) => number;
export const kl_curve: (a: number, b: number) => [number, number, number, number];
export const patch_size: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
