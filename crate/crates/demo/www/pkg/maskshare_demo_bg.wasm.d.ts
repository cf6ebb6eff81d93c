/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_maskexplorer_free: (a: number, b: number) => void;
export const cluster_points: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const maskexplorer_hidden: (a: number) => [number, number];
export const maskexplorer_mask: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const maskexplorer_new: (a: bigint, b: number, c: number) => [number, number, number];
export const maskexplorer_probabilities: (a: number, b: number, c: number) => [number, number, number, number];
export const model_sizes: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
