export * from './interchange';
export * from './exporter';
export * from './toolchain';
export * from './verify';
export * from './artifacts';
export * from './train';
