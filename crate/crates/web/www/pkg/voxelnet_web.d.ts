/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    basis_count(): number;
    /**
     * PATCH x PATCH image of one learned filter.
     */
    basis_image(index: number): Uint8Array;
    depth(): number;
    /**
     * Sigmoid feature map of one filter over one slice; each side shrinks
     * by PATCH - 1.
     */
    feature_slice(_class: number, filter: number, slice: number): Uint8Array;
    height(): number;
    mean_activations(): Float64Array;
    constructor(seed: number, noise_sd: number);
    /**
     * Depth slice of the example volume for `class` (0 = AD, 1 = MCI, 2 = HC).
     */
    scan_slice(_class: number, slice: number): Uint8Array;
    /**
     * Trains on the patch set and returns mean |s_hat - target| over hidden units.
     */
    train(hidden: number, target: number, beta: number, epochs: number): number;
    width(): number;
}

/**
 * `KL(target || q)` at `points` evenly spaced `q` in the open interval (0, 1).
 */
export function kl_curve(target: number, points: number): Float64Array;

export function patch_size(): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_basis_count: (a: number) => number;
    readonly demo_basis_image: (a: number, b: number) => [number, number, number, number];
    readonly demo_depth: (a: number) => number;
    readonly demo_feature_slice: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_height: (a: number) => number;
    readonly demo_mean_activations: (a: number) => [number, number];
    readonly demo_new: (a: number, b: number) => [number, number, number];
    readonly demo_scan_slice: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_train: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly demo_width: (a: number) => number;
    readonly kl_curve: (a: number, b: number) => [number, number, number, number];
    readonly patch_size: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
