/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_courseProfile: (a: number, b: number) => [number, number];
export const demo_heatmap: (a: number, b: number) => [number, number];
export const demo_nCourses: (a: number) => number;
export const demo_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
export const demo_variogram: (a: number, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
