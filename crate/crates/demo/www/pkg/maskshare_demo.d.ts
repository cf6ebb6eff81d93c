/* tslint:disable */
/* eslint-disable */

/**
 * A frozen mapping network from 2-D cluster centers to neuron masks.
 */
export class MaskExplorer {
    free(): void;
    [Symbol.dispose](): void;
    mask(x: number, y: number, lambda: number): Uint8Array;
    constructor(seed: bigint, hidden: string);
    probabilities(x: number, y: number): Float64Array;
    readonly hidden: Uint32Array;
}

/**
 * k-means over flat `x0, y0, x1, y1, ..` coordinates; returns cluster ids.
 */
export function cluster_points(xy: Float64Array, k: number, seed: bigint): Uint32Array;

/**
 * Relative model sizes of all strategies as CSV.
 */
export function model_sizes(env: string, agents: string, k: number, hidden: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_maskexplorer_free: (a: number, b: number) => void;
    readonly cluster_points: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly maskexplorer_hidden: (a: number) => [number, number];
    readonly maskexplorer_mask: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly maskexplorer_new: (a: bigint, b: number, c: number) => [number, number, number];
    readonly maskexplorer_probabilities: (a: number, b: number, c: number) => [number, number, number, number];
    readonly model_sizes: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
